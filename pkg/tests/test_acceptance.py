"""Acceptance suite: one test per release criterion, each printing a
PASS line with its measured runtime when it succeeds.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; a pytest failure on any test is the corresponding FAIL line.
"""

import hashlib
import math
import os
import time

import numpy as np

from ttta import baseline, cli, metrics, preproc, pseudolabel, synth, ttt


def _report(num, detail, elapsed=None):
    suffix = f" ({elapsed:.2f}s)" if elapsed is not None else ""
    print(f"\ncriterion {num}: PASS - {detail}{suffix}")


# -- 1: peak detection against an exhaustive scan ---------------------------

def _brute_force_peaks(s):
    h, w = s.shape
    out = []
    for r in range(h):
        for c in range(w):
            ge_all, gt_any = True, False
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == 0 and dc == 0:
                        continue
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w:
                        ge_all &= s[r, c] >= s[rr, cc]
                        gt_any |= s[r, c] > s[rr, cc]
            if ge_all and gt_any:
                out.append((r, c))
    return out


def test_criterion_01_peak_detection_oracle():
    rng = np.random.default_rng(101)
    maps = [rng.random((32, 32)) for _ in range(200)]
    expected = [_brute_force_peaks(s) for s in maps]
    t0 = time.perf_counter()
    got = [pseudolabel.detect_peaks(s) for s in maps]
    elapsed = time.perf_counter() - t0
    mismatches = sum(g != e for g, e in zip(got, expected))
    assert mismatches == 0
    assert elapsed < 1.0
    _report(1, "detect_peaks == exhaustive scan on 200 maps", elapsed)


# -- 2: nearest-rank percentile against a sort oracle -----------------------

def test_criterion_02_percentile_oracle():
    rng = np.random.default_rng(102)
    t0 = time.perf_counter()
    for _ in range(1000):
        n = int(rng.integers(1, 10_001))
        vals = rng.random(n)
        p = float(rng.uniform(0.0, 100.0))
        got = pseudolabel.percentile_threshold(vals, p)
        asc = sorted(vals.tolist())
        rank = min(max(math.ceil(p / 100.0 * n), 1), n)
        assert got == asc[rank - 1]
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    _report(2, "nearest-rank threshold == sort oracle on 1000 arrays", elapsed)


# -- 3: SVM solver against an independent long-horizon optimizer ------------

def _make_instances(count):
    rng = np.random.default_rng(103)
    instances = []
    for i in range(count):
        n = int(rng.integers(2, 21))
        d = int(rng.integers(1, 4))
        labels = np.concatenate([[1.0, -1.0], rng.choice([-1.0, 1.0], n - 2)])
        feats = rng.normal(size=(n, d))
        mode = ("sum", "mean")[i % 2]
        c = (0.001, 1.0)[(i // 2) % 2]
        instances.append((feats, labels, c, mode))
    return instances


def _batched_oracle(instances, steps=100_000):
    """Projected-subgradient descent with eta = 0.01 / sqrt(t), all
    instances updated in lockstep via zero-padding; returns best objectives."""
    bsz = len(instances)
    n_max = max(f.shape[0] for f, _, _, _ in instances)
    d_max = max(f.shape[1] for f, _, _, _ in instances)
    x = np.zeros((bsz, n_max, d_max))
    y = np.zeros((bsz, n_max))
    cs = np.zeros(bsz)
    reg_scale = np.zeros(bsz)  # d/dw coefficient of the ||w||^2 term
    hinge_scale = np.zeros(bsz)  # multiplier on the summed hinge losses
    for i, (feats, labels, c, mode) in enumerate(instances):
        n, d = feats.shape
        x[i, :n, :d] = feats
        y[i, :n] = labels
        cs[i] = c
        reg_scale[i] = 2.0 if mode == "mean" else 1.0
        hinge_scale[i] = c / n if mode == "mean" else c

    w = np.zeros((bsz, d_max))
    b = np.zeros(bsz)

    def objectives(w, b):
        margins = y * (np.einsum("bnd,bd->bn", x, w) - b[:, None])
        hinge = np.where(y != 0.0, np.maximum(0.0, 1.0 - margins), 0.0)
        return (reg_scale / 2.0) * (w**2).sum(axis=1) + hinge_scale * hinge.sum(
            axis=1
        )

    best = objectives(w, b)
    for t in range(1, steps + 1):
        margins = y * (np.einsum("bnd,bd->bn", x, w) - b[:, None])
        act = (margins < 1.0) & (y != 0.0)
        ya = np.where(act, y, 0.0)
        gw = reg_scale[:, None] * w - hinge_scale[:, None] * np.einsum(
            "bn,bnd->bd", ya, x
        )
        gb = hinge_scale * ya.sum(axis=1)
        eta = 0.01 / np.sqrt(t)
        w = w - eta * gw
        b = b - eta * gb
        best = np.minimum(best, objectives(w, b))
    return best


def test_criterion_03_svm_solver_oracle():
    instances = _make_instances(50)
    oracle = _batched_oracle(instances)
    t0 = time.perf_counter()
    worst = 0.0
    for (feats, labels, c, mode), target in zip(instances, oracle):
        ts = ttt.TrainingSet(
            features=feats, labels=labels, coordinates=[(0, 0)] * len(labels)
        )
        m = ttt.train_svm(ts, c=c, loss_mode=mode, max_iters=30_000, tol=1e-12)
        assert m.objective <= target * 1.001
        worst = max(worst, m.objective / target)
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    _report(3, f"50 instances, worst objective ratio {worst:.6f}", elapsed)


# -- 4: dense prediction against per-pixel dot products ---------------------

def test_criterion_04_dense_prediction_oracle():
    rng = np.random.default_rng(104)
    t0 = time.perf_counter()
    for _ in range(50):
        d = int(rng.integers(1, 6))
        h, w = (int(v) for v in rng.integers(2, 12, 2))
        model = ttt.LinearSVMModel(
            rng.normal(size=d), float(rng.normal()), 1.0, "sum", 0.0, 0
        )
        f = rng.normal(size=(h, w, d))
        mask = ttt.predict_dense(model, f)
        for r in range(h):
            for c in range(w):
                want = 255 if float(f[r, c] @ model.w) - model.b > 0 else 0
                assert mask[r, c] == want
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    _report(4, "predict_dense == per-pixel dot products on 50 pairs", elapsed)


# -- 5: hand-derived metric values ------------------------------------------

def test_criterion_05_metrics_hand_cases():
    gt = np.array([[255, 255], [255, 0]], dtype=np.uint8)
    pred = np.array([[255, 255], [0, 255]], dtype=np.uint8)
    p, r, f1 = metrics.prf1_image(pred, gt)
    assert abs(p - 2 / 3) < 1e-12
    assert abs(r - 2 / 3) < 1e-12
    assert abs(f1 - 2 / 3) < 1e-12

    # pos {3, 5, 6} vs neg {1, 2, 4}: one inverted pair out of nine
    got = metrics.auroc([3, 5, 6, 1, 2, 4], [1, 1, 1, 0, 0, 0])
    assert abs(got - 8 / 9) < 1e-12

    rec = lambda sid, p_, r_, f_: metrics.ImageRecord(sid, 0, 0, 0, p_, r_, f_)
    rep = metrics.aggregate(
        [rec("a", 1.0, 1.0, 1.0), rec("b", 0.0, 0.0, 0.0), rec("c", 0.0, 0.0, 0.4)],
        {"a": "bolt", "b": "bolt", "c": "nut"},
    )
    assert rep.class_means["bolt"]["f1"] == 0.5
    assert rep.class_means["nut"]["f1"] == 0.4
    assert abs(rep.mean["f1"] - 0.45) < 1e-12
    _report(5, "confusion, AUROC and macro-mean hand cases reproduced")


# -- 6: monotonicity of suppression and threshold baselines -----------------

def test_criterion_06_monotonicity_suite():
    rng = np.random.default_rng(106)
    violations = 0
    for _ in range(100):
        s = rng.random((24, 24))
        peaks = pseudolabel.detect_peaks(s)
        prev = None
        for p in (90.0, 95.0, 98.0, 99.0, 99.5):
            kept = set(pseudolabel.suppress_peaks(peaks, s, p))
            if prev is not None and not kept <= prev:
                violations += 1
            prev = kept
    for _ in range(100):
        s, mu, sigma = rng.random((3, 12, 12))
        prev = None
        for c in (0.5, 1.0, 2.0, 3.0, 4.0):
            cur = baseline.binarize_threshold(s, mu, sigma, c) != 0
            if prev is not None and not (cur <= prev).all():
                violations += 1
            prev = cur
    assert violations == 0
    _report(6, "peak suppression and threshold baselines monotone, "
               "0 violations over 200 cases")


# -- 7: rank invariance of the full pipeline --------------------------------

def test_criterion_07_rank_invariance():
    for i in range(20):
        scene = synth.make_scene(7, i, anomalous=True)
        base, _ = ttt.run_ttt4as(scene.score, scene.features)
        doubled, _ = ttt.run_ttt4as(scene.score * 2.0, scene.features)
        cubed, _ = ttt.run_ttt4as(scene.score**3, scene.features)
        assert np.array_equal(base, doubled)
        assert np.array_equal(base, cubed)
    _report(7, "masks identical under s -> 2s and s -> s^3 on 20 scenes")


# -- 8: pinned synthetic benchmark gate -------------------------------------

def test_criterion_08_synthetic_benchmark_gate(tmp_path):
    t0 = time.perf_counter()
    root = tmp_path / "bench"
    synth.generate_split(root, 20, 20, seed=0)
    reports = synth.run_experiment(root)
    f1 = {m: r.mean["f1"] for m, r in reports.items()}
    best_thr = max(f1["thr2"], f1["thr3"], f1["thr4"])
    elapsed = time.perf_counter() - t0
    assert f1["ttt4as"] >= best_thr + 0.05
    assert f1["ttt4as-score-ablation"] <= f1["ttt4as"]
    assert elapsed < 60.0
    _report(8, f"ttt4as F1 {f1['ttt4as']:.3f} vs best threshold {best_thr:.3f},"
               f" ablation {f1['ttt4as-score-ablation']:.3f}", elapsed)


# -- 9: RANSAC plane recovery with far outliers -----------------------------

def test_criterion_09_ransac_plane():
    t0 = time.perf_counter()
    for seed in range(20):
        rng = np.random.default_rng([109, seed])
        h = w = 32
        yy, xx = np.mgrid[0:h, 0:w] / 32.0
        z = 0.1 * xx + 0.2 * yy + 0.05
        z += rng.uniform(-0.002, 0.002, (h, w))  # within the 0.005 band
        pts = np.stack([xx, yy, z], axis=2)
        outlier = rng.random((h, w)) < 0.10
        pts[outlier, 2] += rng.uniform(0.5, 1.5, int(outlier.sum()))
        mask = preproc.ransac_background(pts, seed=seed)
        plane = mask[~outlier]
        assert (plane != 0).mean() >= 0.99  # inlier recall
        assert (mask[outlier] == 0).all()  # outlier rejection
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    _report(9, "plane recovered over 20 seeds with 10% far outliers", elapsed)


# -- 10: byte-identical CLI reruns ------------------------------------------

def _tree_hash(root):
    digest = hashlib.sha256()
    for dirpath, dirnames, filenames in sorted(os.walk(root)):
        dirnames.sort()
        for name in sorted(filenames):
            path = os.path.join(dirpath, name)
            digest.update(os.path.relpath(path, root).encode())
            digest.update(open(path, "rb").read())
    return digest.hexdigest()


def test_criterion_10_cli_determinism(tmp_path):
    def twice(label, *argv):
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"{label}_{run}"
            assert cli.main([str(v) for v in argv] + ["--out", str(out)]) == 0
            outs.append(out)
        assert _tree_hash(outs[0]) == _tree_hash(outs[1]), label
        return outs[0]

    data = twice("gen", "synth", "gen", "--n-val", 4, "--n-test", 3)
    val, test = data / "validation.tsv", data / "test.tsv"
    stats = twice("stats", "stats", "--manifest", val, "--root", data)
    bank = twice("bank", "bank", "--manifest", val, "--root", data)
    twice("score", "score", "--manifest", test, "--root", data, "--bank", bank)
    masks = twice(
        "seg_thr", "segment", "--manifest", test, "--root", data,
        "--mode", "thr", "--stats-dir", stats,
    )
    twice("seg_ttt", "segment", "--manifest", test, "--root", data,
          "--mode", "ttt4as", "--standardize")
    twice("seg_abl", "segment", "--manifest", test, "--root", data,
          "--mode", "ablation")
    twice("eval", "eval", "--manifest", test, "--root", data,
          "--masks", masks, "--with-auroc")
    twice("run", "synth", "run", "--dataset", data, "--methods", "thr3")
    _report(10, "all CLI commands byte-identical across reruns")
