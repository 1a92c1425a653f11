"""Memory-bank anomaly scorer: coreset construction and 1-NN distance scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_io


@dataclass
class MemoryBank:
    """Coreset of nominal patch features; scores are 1-NN distances to it."""

    entries: np.ndarray  # M x D
    coreset_ratio: float
    seed: int
    provenance: tuple[str, ...] = ()


def _kcenter_greedy(candidates: np.ndarray, k: int) -> list[int]:
    """Greedy farthest-point selection of k indices.

    Starts from the largest-norm candidate so the order is deterministic
    without consuming randomness.
    """
    n = candidates.shape[0]
    first = int(np.argmax(np.linalg.norm(candidates, axis=1)))
    selected = [first]
    min_d2 = np.sum((candidates - candidates[first]) ** 2, axis=1)
    min_d2[first] = -np.inf  # never reselect (duplicates would tie at 0)
    while len(selected) < k:
        nxt = int(np.argmax(min_d2))
        selected.append(nxt)
        d2 = np.sum((candidates - candidates[nxt]) ** 2, axis=1)
        np.minimum(min_d2, d2, out=min_d2)
        min_d2[nxt] = -np.inf
    return selected


def build_bank(
    nominal_features: list[np.ndarray],
    coreset_ratio: float = 0.10,
    projection_dim_scale: float = 0.9,
    seed: int = 0,
    provenance: tuple[str, ...] = (),
) -> MemoryBank:
    """Build a memory bank by greedy k-center coreset selection.

    Feature maps are H_f x W_f x D; all patches are pooled. Selection runs on
    a seeded Gaussian random projection to ceil(projection_dim_scale * D)
    dimensions; the bank stores the unprojected selected features.
    """
    if not nominal_features:
        raise ValueError("need at least one nominal feature map")
    if not 0.0 < coreset_ratio <= 1.0:
        raise ValueError(f"coreset_ratio must be in (0, 1], got {coreset_ratio}")
    flat = [np.asarray(f, dtype=np.float64).reshape(-1, f.shape[-1])
            for f in nominal_features]
    d = flat[0].shape[1]
    for f in flat:
        if f.shape[1] != d:
            raise ValueError("feature maps disagree on channel count")
    patches = np.concatenate(flat, axis=0)
    n = patches.shape[0]
    k = min(n, int(np.ceil(coreset_ratio * n)))

    proj_dim = max(1, int(np.ceil(projection_dim_scale * d)))
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((d, proj_dim)) / np.sqrt(proj_dim)
    projected = patches @ projection

    selected = _kcenter_greedy(projected, k)
    return MemoryBank(
        entries=patches[selected],
        coreset_ratio=coreset_ratio,
        seed=seed,
        provenance=tuple(provenance),
    )


def score_map(bank: MemoryBank, features: np.ndarray) -> np.ndarray:
    """Per-patch Euclidean distance to the nearest bank entry (H_f x W_f)."""
    f = np.asarray(features, dtype=np.float64)
    if f.shape[-1] != bank.entries.shape[1]:
        raise ValueError(
            f"feature dim {f.shape[-1]} != bank dim {bank.entries.shape[1]}"
        )
    hf, wf = f.shape[0], f.shape[1]
    flat = f.reshape(-1, f.shape[-1])
    # |x - e|^2 = |x|^2 - 2 x.e + |e|^2, min over entries; chunked to bound memory
    e = bank.entries
    e_sq = np.sum(e * e, axis=1)
    out = np.empty(flat.shape[0])
    chunk = 4096
    for i in range(0, flat.shape[0], chunk):
        x = flat[i : i + chunk]
        d2 = np.sum(x * x, axis=1)[:, None] - 2.0 * (x @ e.T) + e_sq[None, :]
        out[i : i + chunk] = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
    return out.reshape(hf, wf)


def image_score(s: np.ndarray) -> float:
    """Global anomaly score of a map: its pixel maximum."""
    return float(np.max(s))


def validation_stats(validation_scores: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel mean and population standard deviation over validation maps."""
    if len(validation_scores) < 2:
        raise ValueError("need at least 2 validation score maps")
    dims = validation_scores[0].shape
    for s in validation_scores:
        if s.shape != dims:
            raise ValueError(f"score map dims differ: {s.shape} vs {dims}")
    stack = np.stack([np.asarray(s, dtype=np.float64) for s in validation_scores])
    return stack.mean(axis=0), stack.std(axis=0)


def save_bank(bank: MemoryBank, entries_path: str, manifest_path: str) -> None:
    """Serialize entries as a 2-D tensor file plus a sidecar text manifest."""
    tensor_io.write_tensor(bank.entries, entries_path)
    with open(manifest_path, "w", encoding="ascii") as fh:
        fh.write(f"coreset_ratio\t{bank.coreset_ratio}\n")
        fh.write(f"seed\t{bank.seed}\n")
        fh.write(f"provenance\t{','.join(bank.provenance)}\n")


def load_bank(entries_path: str, manifest_path: str) -> MemoryBank:
    entries = tensor_io.read_tensor(entries_path).astype(np.float64)
    meta: dict[str, str] = {}
    with open(manifest_path, "r", encoding="ascii") as fh:
        for line in fh:
            if line.strip():
                key, _, value = line.rstrip("\n").partition("\t")
                meta[key] = value
    return MemoryBank(
        entries=entries,
        coreset_ratio=float(meta.get("coreset_ratio", "nan")),
        seed=int(meta.get("seed", "0")),
        provenance=tuple(p for p in meta.get("provenance", "").split(",") if p),
    )
