"""Pixel-level Precision/Recall/F1 and AUROC evaluation.

P/R/F1 are computed per image on anomalous images only, then macro-averaged:
class metric = mean over the class's images, overall mean = mean over class
means. AUROC is the exact Mann-Whitney rank statistic with midranks for ties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ImageRecord:
    sample_id: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    records: list[ImageRecord]
    class_means: dict[str, dict[str, float]]  # class -> {precision, recall, f1}
    mean: dict[str, float]  # mean over class means
    p_auroc: float | None = None
    i_auroc: float | None = None


def prf1_image(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float, float]:
    """Pixel precision/recall/F1 for one image; gt must contain anomalies.

    Conventions: precision = 0 when nothing is predicted, F1 = 0 when
    precision + recall = 0.
    """
    p = np.asarray(pred) != 0
    g = np.asarray(gt) != 0
    if p.shape != g.shape:
        raise ValueError(f"dims mismatch: pred {p.shape}, gt {g.shape}")
    if not g.any():
        raise ValueError("ground truth has no anomalous pixels; skip this image")
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn)
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return precision, recall, f1


def confusion_counts(pred: np.ndarray, gt: np.ndarray) -> tuple[int, int, int]:
    p = np.asarray(pred) != 0
    g = np.asarray(gt) != 0
    return int((p & g).sum()), int((p & ~g).sum()), int((~p & g).sum())


def aggregate(
    records: list[ImageRecord],
    class_of: dict[str, str] | None = None,
) -> EvalReport:
    """Macro-average per-image records into class means and an overall mean."""
    if not records:
        raise ValueError("no records to aggregate")
    classes: dict[str, list[ImageRecord]] = {}
    for rec in records:
        cls = class_of.get(rec.sample_id, "all") if class_of else "all"
        classes.setdefault(cls, []).append(rec)
    class_means = {}
    for cls, recs in sorted(classes.items()):
        class_means[cls] = {
            "precision": float(np.mean([r.precision for r in recs])),
            "recall": float(np.mean([r.recall for r in recs])),
            "f1": float(np.mean([r.f1 for r in recs])),
        }
    mean = {
        key: float(np.mean([cm[key] for cm in class_means.values()]))
        for key in ("precision", "recall", "f1")
    }
    return EvalReport(records=list(records), class_means=class_means, mean=mean)


def auroc(scores, labels) -> float:
    """Exact ROC area via the Mann-Whitney U statistic with midranks."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both positive and negative labels")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = ranks[y == 1].sum()
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
