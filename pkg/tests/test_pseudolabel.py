import numpy as np
import pytest

from ttta import pseudolabel as pl


def brute_force_peaks(a, exclude=None):
    h, w = a.shape
    out = []
    for r in range(h):
        for c in range(w):
            if exclude is not None and exclude[r, c]:
                continue
            ge_all, gt_any, has_neigh = True, False, False
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == dc == 0:
                        continue
                    rr, cc = r + dr, c + dc
                    if not (0 <= rr < h and 0 <= cc < w):
                        continue
                    has_neigh = True
                    if a[r, c] < a[rr, cc]:
                        ge_all = False
                    if a[r, c] > a[rr, cc]:
                        gt_any = True
            if has_neigh and ge_all and gt_any:
                out.append((r, c))
    return out


def test_single_center_peak():
    a = np.ones((3, 3))
    a[1, 1] = 5.0
    assert pl.detect_peaks(a) == [(1, 1)]


def test_constant_map_no_peaks():
    assert pl.detect_peaks(np.full((4, 4), 2.0)) == []


def test_peaks_vs_brute_force_random():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.random((32, 32))
        assert pl.detect_peaks(a) == brute_force_peaks(a)


def test_peaks_with_plateaus_vs_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = rng.integers(0, 4, (16, 16)).astype(float)  # many ties
        assert pl.detect_peaks(a) == brute_force_peaks(a)


def test_peaks_respect_exclusion():
    a = np.ones((3, 3))
    a[1, 1] = 5.0
    ex = np.zeros((3, 3), dtype=np.uint8)
    ex[1, 1] = 255
    assert pl.detect_peaks(a, ex) == []


def test_peaks_monotone_transform_invariant():
    rng = np.random.default_rng(2)
    a = rng.random((16, 16))
    assert pl.detect_peaks(a) == pl.detect_peaks(np.exp(3.0 * a))


def test_percentile_nearest_rank_1_to_100():
    a = (np.arange(100, dtype=float) + 1).reshape(10, 10)
    assert pl.percentile_threshold(a, 99.0) == 99.0  # ceil(0.99*100) = 99
    assert pl.percentile_threshold(a, 0.0) == 1.0  # clamps to rank 1
    assert pl.percentile_threshold(a, 100.0) == 100.0


def test_suppress_keeps_above_strictly():
    a = (np.arange(100, dtype=float) + 1).reshape(10, 10)
    where100 = tuple(np.argwhere(a == 100.0)[0])
    assert pl.suppress_peaks([where100], a, 99.0) == [where100]
    where99 = tuple(np.argwhere(a == 99.0)[0])
    assert pl.suppress_peaks([where99], a, 99.0) == []  # 99 > 99 is false


def test_percentile_sort_oracle():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(1, 500))
        vals = rng.random(n)
        p = float(rng.uniform(0, 100))
        t = pl.percentile_threshold(vals.reshape(1, -1), p)
        srt = sorted(vals)
        rank = min(max(int(np.ceil(p / 100 * n)), 1), n)
        assert t == srt[rank - 1]


def test_percentile_rejects_out_of_range():
    with pytest.raises(ValueError):
        pl.percentile_threshold(np.ones((2, 2)), 101.0)


def test_enrich_zero_radius():
    assert pl.enrich_anomalous([(2, 3)], (5, 5), radius=0) == {(2, 3)}


def test_enrich_interior_window():
    out = pl.enrich_anomalous([(5, 5)], (11, 11), radius=2)
    assert len(out) == 25


def test_enrich_corner_clipped():
    out = pl.enrich_anomalous([(0, 0)], (10, 10), radius=2)
    assert len(out) == 9


def test_sample_nominal_grid():
    out = pl.sample_nominal((16, 16), set(), stride=8, guard=4)
    assert out == {(4, 4), (4, 12), (12, 4), (12, 12)}


def test_sample_nominal_guard():
    out = pl.sample_nominal((16, 16), {(4, 4)}, stride=8, guard=4)
    assert out == {(4, 12), (12, 4), (12, 12)}


def test_sample_nominal_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(10):
        anom = {
            (int(rng.integers(0, 20)), int(rng.integers(0, 20)))
            for _ in range(rng.integers(0, 6))
        }
        got = pl.sample_nominal((20, 20), anom, stride=5, guard=3)
        want = {
            (r, c)
            for r in range(20)
            for c in range(20)
            if r % 5 == 2 and c % 5 == 2
            and all(max(abs(r - ar), abs(c - ac)) > 3 for ar, ac in anom)
        }
        assert got == want


def test_build_constant_map_empty_anomalous():
    with pytest.raises(pl.EmptyAnomalousError):
        pl.build_pseudolabels(np.full((16, 16), 3.0))


def test_build_single_spike_counts():
    a = np.zeros((32, 32))
    a[16, 16] = 10.0
    labels = pl.build_pseudolabels(a)
    anom = labels.anomalous
    assert len(anom) == 25  # 5x5 window around the spike
    # nominal grid minus points guarded by the anomalous window
    grid = pl.sample_nominal((32, 32), set(anom), 8, 4)
    assert set(labels.nominal) == grid
    assert len(labels.nominal) > 0


def test_build_two_bumps_only_high_kept():
    # one bump above the 99th percentile, one below: only the high bump's
    # window becomes anomalous
    a = np.zeros((40, 40))
    yy, xx = np.mgrid[0:40, 0:40]
    a += 10.0 * np.exp(-(((yy - 10) ** 2 + (xx - 10) ** 2) / 8.0))
    a += 0.5 * np.exp(-(((yy - 30) ** 2 + (xx - 30) ** 2) / 8.0))
    labels = pl.build_pseudolabels(a)
    anom = np.array(labels.anomalous)
    assert len(anom) > 0
    assert (np.abs(anom - [10, 10]).max(axis=1) <= 2).all()


def test_build_label_partition():
    rng = np.random.default_rng(5)
    a = rng.random((64, 64))
    a[20, 20] = 5.0
    labels = pl.build_pseudolabels(a)
    anom, nom = set(labels.anomalous), set(labels.nominal)
    assert not (anom & nom)
    guard = 4
    for r, c in nom:
        assert all(max(abs(r - ar), abs(c - ac)) > guard for ar, ac in anom)


def test_kept_peaks_monotone_in_percentile():
    rng = np.random.default_rng(6)
    for _ in range(10):
        a = rng.random((32, 32))
        peaks = pl.detect_peaks(a)
        previous = None
        for p in (90.0, 95.0, 98.0, 99.0, 99.5):
            kept = set(pl.suppress_peaks(peaks, a, p))
            if previous is not None:
                assert kept <= previous
            previous = kept


def test_build_deterministic():
    rng = np.random.default_rng(7)
    a = rng.random((64, 64))
    a[5, 5] = 4.0
    assert pl.build_pseudolabels(a) == pl.build_pseudolabels(a.copy())
