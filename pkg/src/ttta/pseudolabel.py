"""Pseudo-label mining from an anomaly score map.

Pipeline: detect 8-neighbor local maxima, suppress peaks at or below the
nearest-rank percentile threshold of the whole map, enrich survivors with a
Chebyshev window (label +1), and sample the remaining area on a regular grid
(label -1), keeping a guard band around anomalous points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyAnomalousError(RuntimeError):
    """No peak survived percentile suppression; caller decides the fallback."""


class EmptyNominalError(RuntimeError):
    """Anomalous labels plus guard band cover the whole sampling grid."""


@dataclass(frozen=True)
class PseudoLabelConfig:
    percentile: float = 99.0
    enrich_radius: int = 2
    nominal_stride: int = 8
    nominal_guard: int = 4


@dataclass(frozen=True)
class PseudoLabelSet:
    """Sparse (row, col, label) pixels, label +1 anomalous / -1 nominal."""

    points: tuple[tuple[int, int, int], ...]
    percentile: float
    threshold: float
    enrich_radius: int
    nominal_stride: int

    @property
    def anomalous(self) -> list[tuple[int, int]]:
        return [(r, c) for r, c, lab in self.points if lab == 1]

    @property
    def nominal(self) -> list[tuple[int, int]]:
        return [(r, c) for r, c, lab in self.points if lab == -1]


def _excluded(exclude: np.ndarray | None, dims: tuple[int, int]) -> np.ndarray:
    if exclude is None:
        return np.zeros(dims, dtype=bool)
    ex = np.asarray(exclude)
    if ex.shape != dims:
        raise ValueError(f"exclude mask dims {ex.shape} != score dims {dims}")
    return ex != 0


def detect_peaks(
    s: np.ndarray, exclude: np.ndarray | None = None
) -> list[tuple[int, int]]:
    """Local maxima: >= every in-bounds 8-neighbor, > at least one of them.

    Returned in row-major order. Excluded pixels never qualify.
    """
    a = np.asarray(s, dtype=np.float64)
    h, w = a.shape
    ge_all = np.ones((h, w), dtype=bool)
    gt_any = np.zeros((h, w), dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            r0, r1 = max(dr, 0), h + min(dr, 0)
            c0, c1 = max(dc, 0), w + min(dc, 0)
            center = a[r0:r1, c0:c1]
            neigh = a[r0 - dr : r1 - dr, c0 - dc : c1 - dc]
            ge_all[r0:r1, c0:c1] &= center >= neigh
            gt_any[r0:r1, c0:c1] |= center > neigh
    peaks = ge_all & gt_any & ~_excluded(exclude, (h, w))
    return [(int(r), int(c)) for r, c in np.argwhere(peaks)]


def percentile_threshold(s: np.ndarray, percentile: float) -> float:
    """Nearest-rank percentile over all pixel values.

    Ascending sort, 1-based index ceil(p / 100 * N), clamped to [1, N].
    """
    if not 0.0 <= percentile <= 100.0:
        raise ValueError(f"percentile must be in [0, 100], got {percentile}")
    vals = np.sort(np.asarray(s, dtype=np.float64).ravel())
    n = vals.size
    rank = min(max(int(np.ceil(percentile / 100.0 * n)), 1), n)
    return float(vals[rank - 1])


def suppress_peaks(
    peaks: list[tuple[int, int]], s: np.ndarray, percentile: float = 99.0
) -> list[tuple[int, int]]:
    """Keep peaks whose score is strictly above the percentile threshold."""
    t = percentile_threshold(s, percentile)
    a = np.asarray(s, dtype=np.float64)
    return [(r, c) for r, c in peaks if a[r, c] > t]


def enrich_anomalous(
    kept_peaks: list[tuple[int, int]],
    dims: tuple[int, int],
    radius: int = 2,
    exclude: np.ndarray | None = None,
) -> set[tuple[int, int]]:
    """Union of Chebyshev-radius windows around kept peaks, clipped in-bounds."""
    h, w = dims
    ex = _excluded(exclude, dims)
    out: set[tuple[int, int]] = set()
    for r, c in kept_peaks:
        for rr in range(max(r - radius, 0), min(r + radius, h - 1) + 1):
            for cc in range(max(c - radius, 0), min(c + radius, w - 1) + 1):
                if not ex[rr, cc]:
                    out.add((rr, cc))
    return out


def sample_nominal(
    dims: tuple[int, int],
    anomalous: set[tuple[int, int]],
    stride: int = 8,
    guard: int = 4,
    exclude: np.ndarray | None = None,
) -> set[tuple[int, int]]:
    """Regular grid of nominal pixels, avoiding the anomalous guard band.

    Grid offset is stride // 2 in both axes; a grid point is dropped when any
    anomalous pixel is within Chebyshev distance ``guard`` or it is excluded.
    """
    h, w = dims
    ex = _excluded(exclude, dims)
    offset = stride // 2
    out: set[tuple[int, int]] = set()
    for r in range(offset, h, stride):
        for c in range(offset, w, stride):
            if ex[r, c]:
                continue
            if any(
                max(abs(r - ar), abs(c - ac)) <= guard for ar, ac in anomalous
            ):
                continue
            out.add((r, c))
    return out


def build_pseudolabels(
    s: np.ndarray,
    config: PseudoLabelConfig = PseudoLabelConfig(),
    exclude: np.ndarray | None = None,
) -> PseudoLabelSet:
    """Compose peak detection, suppression, enrichment, and nominal sampling.

    Raises :class:`EmptyAnomalousError` / :class:`EmptyNominalError` when the
    respective class comes out empty; the fallback policy lives in the caller.
    """
    a = np.asarray(s, dtype=np.float64)
    t = percentile_threshold(a, config.percentile)
    peaks = detect_peaks(a, exclude)
    kept = [(r, c) for r, c in peaks if a[r, c] > t]
    anomalous = enrich_anomalous(kept, a.shape, config.enrich_radius, exclude)
    if not anomalous:
        raise EmptyAnomalousError(
            f"no peak above the {config.percentile}th-percentile "
            f"threshold {t:.6g}"
        )
    nominal = sample_nominal(
        a.shape, anomalous, config.nominal_stride, config.nominal_guard, exclude
    )
    if not nominal:
        raise EmptyNominalError("guard band around anomalies covers the grid")
    points = tuple(
        [(r, c, 1) for r, c in sorted(anomalous)]
        + [(r, c, -1) for r, c in sorted(nominal)]
    )
    return PseudoLabelSet(
        points=points,
        percentile=config.percentile,
        threshold=t,
        enrich_radius=config.enrich_radius,
        nominal_stride=config.nominal_stride,
    )
