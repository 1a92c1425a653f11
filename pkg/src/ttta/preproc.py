"""Feature-map alignment and RANSAC plane-fit background removal.

Bilinear upsampling uses the half-pixel-center convention: output pixel
(r, c) samples source coordinate ((r + 0.5) * H_f / H - 0.5,
(c + 0.5) * W_f / W - 0.5), clamped to the valid range.
"""

from __future__ import annotations

import numpy as np

BACKGROUND = 255
FOREGROUND = 0


def upsample_bilinear(f: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinearly upsample an H_f x W_f x D feature map to H x W x D."""
    if h <= 0 or w <= 0:
        raise ValueError(f"target dims must be positive, got {h}x{w}")
    src = np.asarray(f, dtype=np.float64)
    hf, wf = src.shape[0], src.shape[1]
    if (hf, wf) == (h, w):
        return src.copy()

    ys = np.clip((np.arange(h) + 0.5) * hf / h - 0.5, 0.0, hf - 1.0)
    xs = np.clip((np.arange(w) + 0.5) * wf / w - 0.5, 0.0, wf - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, hf - 1)
    x1 = np.minimum(x0 + 1, wf - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bot = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def concat_channels(maps: list[np.ndarray]) -> np.ndarray:
    """Concatenate dense feature maps channel-wise, in list order."""
    if not maps:
        raise ValueError("need at least one feature map")
    dims = maps[0].shape[:2]
    for m in maps:
        if m.shape[:2] != dims:
            raise ValueError(f"spatial dims differ: {m.shape[:2]} vs {dims}")
    return np.concatenate(maps, axis=2)


def _fit_plane_lsq(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares plane through pts: returns (unit normal, centroid)."""
    centroid = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    return vt[-1], centroid


def ransac_background(
    points: np.ndarray,
    dist_threshold: float = 0.005,
    iterations: int = 1000,
    seed: int = 0,
) -> np.ndarray:
    """Fit a dominant plane to an organized H x W x 3 point map with RANSAC.

    Returns a mask with 255 where a point lies within ``dist_threshold`` of
    the refined plane (background) and 0 elsewhere. All-zero points denote
    missing measurements and are marked background.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 3 or pts.shape[2] != 3:
        raise ValueError(f"point map must be H x W x 3, got {pts.shape}")
    h, w = pts.shape[:2]
    flat = pts.reshape(-1, 3)
    valid = ~np.all(flat == 0.0, axis=1)
    valid_pts = flat[valid]
    if valid_pts.shape[0] < 3:
        raise ValueError(f"need >= 3 valid points, got {valid_pts.shape[0]}")

    rng = np.random.default_rng(seed)
    best_count = -1
    best_inliers: np.ndarray | None = None
    for _ in range(iterations):
        idx = rng.choice(valid_pts.shape[0], size=3, replace=False)
        p0, p1, p2 = valid_pts[idx]
        normal = np.cross(p1 - p0, p2 - p0)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:  # collinear sample
            continue
        normal /= norm
        dist = np.abs((valid_pts - p0) @ normal)
        inliers = dist < dist_threshold
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
    if best_inliers is None:
        raise ValueError("all RANSAC samples were collinear")

    normal, centroid = _fit_plane_lsq(valid_pts[best_inliers])
    dist_all = np.abs((flat - centroid) @ normal)
    background = np.full(h * w, BACKGROUND, dtype=np.uint8)
    background[valid] = np.where(
        dist_all[valid] < dist_threshold, BACKGROUND, FOREGROUND
    )
    return background.reshape(h, w)
