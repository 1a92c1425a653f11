"""Per-sample test-time training: linear SVM on pseudo-labeled features.

Training minimizes, by deterministic full-batch subgradient descent from
w = 0, b = 0 with step 0.1 / (1 + t / 100):

    mean mode:  |w|^2     + C * (1/n) * sum_i max(0, 1 - y_i (w.f_i - b))
    sum  mode:  |w|^2 / 2 + C *         sum_i max(0, 1 - y_i (w.f_i - b))

The bias is unregularized. Sum mode is the default; it matches the usual
linear-SVC convention under which C = 0.001 is a meaningful setting.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .pseudolabel import (
    EmptyAnomalousError,
    EmptyNominalError,
    PseudoLabelConfig,
    PseudoLabelSet,
    build_pseudolabels,
)
from .tensor_io import ANOMALOUS, NOMINAL


@dataclass
class LinearSVMModel:
    w: np.ndarray
    b: float
    C: float
    loss_mode: str
    objective: float
    iterations: int


@dataclass
class TrainingSet:
    features: np.ndarray  # n x d
    labels: np.ndarray  # n, values in {-1, +1}
    coordinates: list[tuple[int, int]]


@dataclass(frozen=True)
class TTTConfig:
    pseudo: PseudoLabelConfig = field(default_factory=PseudoLabelConfig)
    svm_c: float = 0.001
    loss_mode: str = "sum"
    max_iters: int = 2000
    tol: float = 1e-6
    standardize: bool = False
    seed: int = 0


@dataclass
class Diagnostics:
    n_anomalous: int = 0
    n_nominal: int = 0
    threshold: float = float("nan")
    objective: float = float("nan")
    iterations: int = 0
    loss_mode: str = "sum"
    svm_c: float = 0.001
    fallback: str = ""  # "", "empty_anomalous", "empty_nominal"


def gather_training_set(
    f: np.ndarray, labels: PseudoLabelSet
) -> TrainingSet:
    """Pick feature rows at the pseudo-label coordinates, in label-set order."""
    if not labels.points:
        raise ValueError("empty pseudo-label set")
    lab = np.array([p[2] for p in labels.points], dtype=np.float64)
    if not ((lab == 1).any() and (lab == -1).any()):
        raise ValueError("training set must contain both classes")
    rows = np.array([p[0] for p in labels.points])
    cols = np.array([p[1] for p in labels.points])
    h, w = f.shape[0], f.shape[1]
    if rows.min() < 0 or rows.max() >= h or cols.min() < 0 or cols.max() >= w:
        raise ValueError("pseudo-label coordinate out of bounds")
    feats = np.asarray(f, dtype=np.float64)[rows, cols].reshape(len(lab), -1)
    coords = [(p[0], p[1]) for p in labels.points]
    return TrainingSet(features=feats, labels=lab, coordinates=coords)


def hinge_objective(
    w: np.ndarray, b: float, feats: np.ndarray, labels: np.ndarray,
    c: float, loss_mode: str,
) -> float:
    margins = labels * (feats @ w - b)
    hinge = np.maximum(0.0, 1.0 - margins)
    if loss_mode == "mean":
        return float(w @ w + c * hinge.mean())
    return float(0.5 * (w @ w) + c * hinge.sum())


def train_svm(
    ts: TrainingSet,
    c: float = 0.001,
    loss_mode: str = "sum",
    max_iters: int = 2000,
    tol: float = 1e-6,
    seed: int = 0,
) -> LinearSVMModel:
    """Fit the soft-margin linear SVM by full-batch subgradient descent.

    Deterministic: fixed start, fixed step schedule; the best-objective
    iterate is returned. ``seed`` is recorded but unused by this solver.
    """
    if loss_mode not in ("sum", "mean"):
        raise ValueError(f"loss_mode must be 'sum' or 'mean', got {loss_mode!r}")
    feats = ts.features
    labels = ts.labels
    n, d = feats.shape
    if not ((labels == 1).any() and (labels == -1).any()):
        raise ValueError("training set must contain both classes")

    w = np.zeros(d)
    b = 0.0
    best_w, best_b = w.copy(), b
    best_obj = np.inf
    eta0, tau = 0.1, 100.0
    hinge_scale = c / n if loss_mode == "mean" else c
    reg_obj_scale = 1.0 if loss_mode == "mean" else 0.5
    reg_grad_scale = 2.0 if loss_mode == "mean" else 1.0
    yf = labels[:, None] * feats  # gradient of the margin term, per sample

    window: deque[float] = deque(maxlen=51)
    iters = 0
    for t in range(0, max_iters + 1):
        margins = labels * (feats @ w - b)
        hinge = np.maximum(0.0, 1.0 - margins)
        obj = reg_obj_scale * (w @ w) + hinge_scale * hinge.sum()
        if not np.isfinite(obj):
            raise FloatingPointError(f"objective diverged at iteration {t}")
        if obj < best_obj:
            best_obj = obj
            best_w, best_b = w.copy(), b
        window.append(obj)
        if len(window) == window.maxlen:
            lo, hi = min(window), max(window)
            if hi - lo <= tol * max(abs(hi), 1.0):
                break
        if t == max_iters:
            break
        active = (margins < 1.0).astype(np.float64)
        grad_w = reg_grad_scale * w - hinge_scale * (yf.T @ active)
        grad_b = hinge_scale * (labels @ active)
        eta = eta0 / (1.0 + (t + 1) / tau)
        w -= eta * grad_w
        b -= eta * grad_b
        iters = t + 1
    return LinearSVMModel(
        w=best_w, b=best_b, C=c, loss_mode=loss_mode,
        objective=best_obj, iterations=iters,
    )


def predict_dense(
    m: LinearSVMModel,
    f: np.ndarray,
    exclude: np.ndarray | None = None,
) -> np.ndarray:
    """Dense mask: 255 where w.f(r,c) - b > 0, 0 elsewhere or excluded."""
    feats = np.asarray(f, dtype=np.float64)
    if feats.shape[-1] != m.w.shape[0]:
        raise ValueError(
            f"feature channels {feats.shape[-1]} != model dim {m.w.shape[0]}"
        )
    margin = feats @ m.w - m.b
    mask = np.where(margin > 0.0, ANOMALOUS, NOMINAL).astype(np.uint8)
    if exclude is not None:
        mask[np.asarray(exclude) != 0] = NOMINAL
    return mask


def _standardize(feats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = feats.mean(axis=0)
    sigma = np.sqrt(np.maximum(feats.var(axis=0), 1e-8))
    return mu, sigma


def run_ttt4as(
    s: np.ndarray,
    f: np.ndarray,
    config: TTTConfig = TTTConfig(),
    exclude: np.ndarray | None = None,
) -> tuple[np.ndarray, Diagnostics]:
    """Full per-sample pipeline: pseudo-labels, SVM fit, dense prediction.

    Falls back to an all-nominal mask when no anomalous pseudo-label exists,
    and to thresholding the score at the percentile threshold when no nominal
    pseudo-label survives; either way a mask plus diagnostics is returned.
    """
    a = np.asarray(s, dtype=np.float64)
    if a.shape != f.shape[:2]:
        raise ValueError(f"score dims {a.shape} != feature dims {f.shape[:2]}")
    diag = Diagnostics(loss_mode=config.loss_mode, svm_c=config.svm_c)
    try:
        labels = build_pseudolabels(a, config.pseudo, exclude)
    except EmptyAnomalousError:
        diag.fallback = "empty_anomalous"
        return np.zeros(a.shape, dtype=np.uint8), diag
    except EmptyNominalError:
        from .pseudolabel import percentile_threshold

        t = percentile_threshold(a, config.pseudo.percentile)
        diag.fallback = "empty_nominal"
        diag.threshold = t
        mask = np.where(a > t, ANOMALOUS, NOMINAL).astype(np.uint8)
        if exclude is not None:
            mask[np.asarray(exclude) != 0] = NOMINAL
        return mask, diag

    diag.threshold = labels.threshold
    ts = gather_training_set(f, labels)
    diag.n_anomalous = int((ts.labels == 1).sum())
    diag.n_nominal = int((ts.labels == -1).sum())

    dense = np.asarray(f, dtype=np.float64)
    if config.standardize:
        mu, sigma = _standardize(ts.features)
        ts = TrainingSet(
            features=(ts.features - mu) / sigma,
            labels=ts.labels,
            coordinates=ts.coordinates,
        )
        dense = (dense - mu) / sigma

    model = train_svm(
        ts,
        c=config.svm_c,
        loss_mode=config.loss_mode,
        max_iters=config.max_iters,
        tol=config.tol,
        seed=config.seed,
    )
    diag.objective = model.objective
    diag.iterations = model.iterations
    return predict_dense(model, dense, exclude), diag


def run_score_feature_ablation(
    s: np.ndarray,
    config: TTTConfig = TTTConfig(),
    exclude: np.ndarray | None = None,
) -> tuple[np.ndarray, Diagnostics]:
    """Same pipeline with the scalar score itself as the only feature."""
    a = np.asarray(s, dtype=np.float64)
    return run_ttt4as(a, a[:, :, None], config, exclude)
