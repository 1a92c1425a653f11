"""Folder-level export: images to feature tensors, TIFFs to point maps."""

from __future__ import annotations

import os

import numpy as np
import tifffile
from PIL import Image

from . import backbones, tensorfile

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def _list_files(directory: str, extensions: tuple[str, ...]) -> list[str]:
    names = sorted(
        n for n in os.listdir(directory)
        if os.path.splitext(n)[1].lower() in extensions
    )
    if not names:
        raise FileNotFoundError(f"no {'/'.join(extensions)} files in {directory}")
    return names


def load_image(path: str, resize: int = 256, crop: int = 224) -> np.ndarray:
    """Decode, resize to ``resize`` square, center-crop to ``crop`` square.

    Returns H x W x 3 float32 in [0, 1].
    """
    if crop > resize:
        raise ValueError(f"crop {crop} exceeds resize {resize}")
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize((resize, resize), Image.BILINEAR)
    except (OSError, SyntaxError) as exc:
        raise ValueError(f"unreadable image {path}: {exc}") from exc
    off = (resize - crop) // 2
    rgb = rgb.crop((off, off, off + crop, off + crop))
    return np.asarray(rgb, dtype=np.float32) / 255.0


def _manifest_line(sample_id: str, feature_paths: list[str]) -> str:
    # core SampleRecord layout: id, score, features, point map, ground truth
    return "\t".join((sample_id, "", ",".join(feature_paths), "", ""))


def export_features(
    image_dir: str,
    out_dir: str,
    backbone: str = "patch-stats",
    resize: int = 256,
    crop: int = 224,
    layers: tuple[str, ...] | None = None,
) -> list[str]:
    """Export one feature tensor per image and layer, plus ``manifest.tsv``.

    Returns the exported sample ids. ``manifest.meta`` records the preset,
    preprocessing, and layer choice so downstream runs are traceable.
    """
    names = _list_files(image_dir, IMAGE_EXTENSIONS)
    os.makedirs(os.path.join(out_dir, "features"), exist_ok=True)

    lines: list[str] = []
    sample_ids: list[str] = []
    used_layers: tuple[str, ...] = ()
    for name in names:
        sid = os.path.splitext(name)[0]
        img = load_image(os.path.join(image_dir, name), resize, crop)
        used_layers, grids = backbones.extract(backbone, img, layers)
        paths = []
        for layer, grid in zip(used_layers, grids):
            rel = f"features/{sid}__{layer}.tt"
            tensorfile.write_tensor(grid, os.path.join(out_dir, rel))
            paths.append(rel)
        lines.append(_manifest_line(sid, paths))
        sample_ids.append(sid)

    with open(os.path.join(out_dir, "manifest.tsv"), "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(out_dir, "manifest.meta"), "w", encoding="ascii") as fh:
        fh.write(f"backbone\t{backbone}\n")
        fh.write(f"layers\t{','.join(used_layers)}\n")
        fh.write(f"resize\t{resize}\n")
        fh.write(f"crop\t{crop}\n")
        fh.write(f"images\t{len(sample_ids)}\n")
    return sample_ids


def export_pointmaps(tiff_dir: str, out_dir: str) -> list[str]:
    """Convert organized 3-channel coordinate TIFFs to H x W x 3 tensors."""
    names = _list_files(tiff_dir, (".tif", ".tiff"))
    os.makedirs(out_dir, exist_ok=True)
    sample_ids = []
    for name in names:
        pts = np.asarray(tifffile.imread(os.path.join(tiff_dir, name)))
        if pts.ndim != 3 or pts.shape[2] != 3:
            raise ValueError(
                f"{name}: point map must be H x W x 3, got shape {pts.shape}"
            )
        sid = os.path.splitext(name)[0]
        tensorfile.write_tensor(
            pts.astype(np.float32), os.path.join(out_dir, f"{sid}.tt")
        )
        sample_ids.append(sid)
    return sample_ids
