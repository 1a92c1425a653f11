import numpy as np
import pytest

from ttta import baseline, synth, scorer


def test_degenerate_sigma():
    mu = np.ones((2, 2))
    sigma = np.zeros((2, 2))
    s = np.ones((2, 2))
    assert (baseline.binarize_threshold(s, mu, sigma, 3.0) == 0).all()
    assert (baseline.binarize_threshold(s + 1e-6, mu, sigma, 3.0) == 255).all()


def test_scores_equal_mu_all_nominal():
    rng = np.random.default_rng(0)
    mu = rng.random((3, 3))
    sigma = rng.random((3, 3))
    for c in (0.0, 1.0, 4.0):
        assert (baseline.binarize_threshold(mu, mu, sigma, c) == 0).all()


def test_binarize_scalar_oracle():
    rng = np.random.default_rng(1)
    s, mu, sigma = rng.random((3, 8, 8))
    mask = baseline.binarize_threshold(s, mu, sigma, 3.0)
    for r in range(8):
        for c in range(8):
            want = 255 if s[r, c] > mu[r, c] + 3.0 * sigma[r, c] else 0
            assert mask[r, c] == want


def test_binarize_dim_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        baseline.binarize_threshold(np.ones((2, 2)), np.ones((3, 3)), np.ones((3, 3)), 1.0)


def test_anomalous_set_monotone_in_c():
    rng = np.random.default_rng(2)
    for _ in range(20):
        s, mu, sigma = rng.random((3, 6, 6))
        prev = None
        for c in (0.5, 1.0, 2.0, 3.0, 4.0):
            cur = baseline.binarize_threshold(s, mu, sigma, c) != 0
            if prev is not None:
                assert (cur <= prev).all()
            prev = cur


def test_commutes_with_constant_shift():
    rng = np.random.default_rng(3)
    s, mu, sigma = rng.random((3, 5, 5))
    a = baseline.binarize_threshold(s, mu, sigma, 2.0)
    b = baseline.binarize_threshold(s + 7.0, mu + 7.0, sigma, 2.0)
    assert np.array_equal(a, b)


def test_sweep_perfect_calibration():
    # scores = gt + small noise; validation stats are tight around the noise
    knobs = synth.SynthKnobs(calibrated=True, score_noise=0.02, blur_passes=0)
    val = [synth.make_scene(9, i, False, knobs).score for i in range(30)]
    mu, sigma = scorer.validation_stats(val)
    scenes = [synth.make_scene(9, i, True, knobs) for i in range(5)]
    result = baseline.sweep_c(
        [sc.score for sc in scenes], mu, sigma, [sc.gt for sc in scenes]
    )
    counts = []
    for c in (2.0, 3.0, 4.0):
        assert result["rows"][c]["f1"] > 0.95
        masks = [
            baseline.binarize_threshold(sc.score, mu, sigma, c) for sc in scenes
        ]
        counts.append(sum(int((m != 0).sum()) for m in masks))
    assert counts[0] >= counts[1] >= counts[2]


def test_sweep_reports_best_c():
    knobs = synth.SynthKnobs()
    val = [synth.make_scene(3, i, False, knobs).score for i in range(10)]
    mu, sigma = scorer.validation_stats(val)
    scenes = [synth.make_scene(3, i, True, knobs) for i in range(5)]
    result = baseline.sweep_c(
        [sc.score for sc in scenes], mu, sigma, [sc.gt for sc in scenes]
    )
    assert result["best_c"] in (2.0, 3.0, 4.0)
    best = result["rows"][result["best_c"]]["f1"]
    assert all(result["rows"][c]["f1"] <= best for c in (2.0, 3.0, 4.0))


def test_sweep_degenerate_sigma_floods():
    # sigma = 0 on validation, noisy test scores: threshold collapses to mu,
    # so recall saturates and precision is poor
    mu = np.zeros((32, 32))
    sigma = np.zeros((32, 32))
    rng = np.random.default_rng(6)
    s = np.abs(rng.standard_normal((32, 32))) * 0.1
    gt = np.zeros((32, 32), dtype=np.uint8)
    gt[10:14, 10:14] = 255
    s[10:14, 10:14] += 1.0
    result = baseline.sweep_c([s], mu, sigma, [gt])
    for c in (2.0, 3.0, 4.0):
        assert result["rows"][c]["recall"] == 1.0
        assert result["rows"][c]["precision"] < 0.2
