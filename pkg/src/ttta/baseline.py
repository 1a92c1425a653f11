"""Validation-statistics thresholding baseline: anomalous iff s > mu + c*sigma."""

from __future__ import annotations

import numpy as np

from .tensor_io import ANOMALOUS, NOMINAL
from . import metrics


def binarize_threshold(
    s: np.ndarray, mu: np.ndarray, sigma: np.ndarray, c: float
) -> np.ndarray:
    """Per-pixel threshold mask, strict comparison."""
    a = np.asarray(s, dtype=np.float64)
    if a.shape != np.shape(mu) or a.shape != np.shape(sigma):
        raise ValueError(
            f"dims mismatch: scores {a.shape}, mu {np.shape(mu)}, "
            f"sigma {np.shape(sigma)}"
        )
    thr = np.asarray(mu, dtype=np.float64) + c * np.asarray(sigma, dtype=np.float64)
    return np.where(a > thr, ANOMALOUS, NOMINAL).astype(np.uint8)


def sweep_c(
    score_maps: list[np.ndarray],
    mu: np.ndarray,
    sigma: np.ndarray,
    gts: list[np.ndarray],
    cs: tuple[float, ...] = (2.0, 3.0, 4.0),
) -> dict:
    """Mean pixel P/R/F1 per threshold factor; reports the best-F1 factor."""
    if len(score_maps) != len(gts):
        raise ValueError("need one ground-truth mask per score map")
    rows = {}
    for c in cs:
        per_image = [
            metrics.prf1_image(binarize_threshold(s, mu, sigma, c), gt)
            for s, gt in zip(score_maps, gts)
        ]
        arr = np.array(per_image)
        rows[c] = {
            "precision": float(arr[:, 0].mean()),
            "recall": float(arr[:, 1].mean()),
            "f1": float(arr[:, 2].mean()),
        }
    best_c = max(rows, key=lambda c: rows[c]["f1"])
    return {"rows": rows, "best_c": best_c}
