"""Feature-extractor presets.

Each preset maps a preprocessed RGB image (H x W x 3 float32 in [0, 1]) to
one H_f x W_f x D_f feature grid per selected layer. Two families:

- ``patch-stats``: a handcrafted patch descriptor (channel statistics plus
  an oriented-gradient histogram). No weights, fully deterministic, useful
  for smoke-testing pipelines without any pretrained model.
- ``wide_resnet50``: torchvision's pretrained WideResNet-50-2. Weights are
  never downloaded implicitly; if they are not already in the local torch
  hub cache the preset raises :class:`BackboneUnavailableError` with an
  install hint.
"""

from __future__ import annotations

import glob
import os

import numpy as np


class BackboneUnavailableError(RuntimeError):
    """The requested backbone cannot run on this machine."""


_LUMA = np.array([0.299, 0.587, 0.114])
_HOG_BINS = 8


def _patch_stats(img: np.ndarray, patch: int = 8) -> np.ndarray:
    """Per-patch channel mean/std, gradient energy, and orientation histogram."""
    h, w, _ = img.shape
    gh, gw = h // patch, w // patch
    if gh < 1 or gw < 1:
        raise ValueError(f"image {h}x{w} smaller than patch size {patch}")
    img = img[: gh * patch, : gw * patch]

    blocks = img.reshape(gh, patch, gw, patch, 3)
    mean = blocks.mean(axis=(1, 3))
    std = blocks.std(axis=(1, 3))

    gray = img @ _LUMA
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy).reshape(gh, patch, gw, patch)
    ang = np.arctan2(gy, gx)
    bins = (((ang + np.pi) / (2.0 * np.pi)) * _HOG_BINS).astype(int) % _HOG_BINS
    bins = bins.reshape(gh, patch, gw, patch)

    hog = np.stack(
        [(mag * (bins == b)).sum(axis=(1, 3)) for b in range(_HOG_BINS)], axis=2
    )
    hog = hog / (hog.sum(axis=2, keepdims=True) + 1e-8)
    energy = mag.mean(axis=(1, 3))[..., None]
    out = np.concatenate([mean, std, energy, hog], axis=2)
    return np.ascontiguousarray(out, dtype=np.float32)


def _torch_cache_has(pattern: str) -> bool:
    hub = os.environ.get(
        "TORCH_HOME", os.path.join(os.path.expanduser("~"), ".cache", "torch")
    )
    return bool(glob.glob(os.path.join(hub, "hub", "checkpoints", pattern)))


def _wide_resnet50(img: np.ndarray, layers: tuple[str, ...]) -> list[np.ndarray]:
    try:
        import torch
        from torchvision.models import Wide_ResNet50_2_Weights, wide_resnet50_2
        from torchvision.models.feature_extraction import create_feature_extractor
    except ImportError as exc:
        raise BackboneUnavailableError(
            "wide_resnet50 needs torch and torchvision: "
            "pip install 'ttta-exporter[torch]'"
        ) from exc
    if not _torch_cache_has("wide_resnet50_2-*.pth"):
        raise BackboneUnavailableError(
            "pretrained wide_resnet50_2 weights not found in the torch hub "
            "cache; download them once on a networked machine, e.g. "
            "python -c \"from torchvision.models import wide_resnet50_2, "
            "Wide_ResNet50_2_Weights; "
            "wide_resnet50_2(weights=Wide_ResNet50_2_Weights.IMAGENET1K_V1)\""
        )
    model = wide_resnet50_2(weights=Wide_ResNet50_2_Weights.IMAGENET1K_V1)
    model.eval()
    extractor = create_feature_extractor(model, return_nodes=list(layers))
    x = torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))[None]
    mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
    std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
    with torch.no_grad():
        grids = extractor((x - mean) / std)
    return [
        np.ascontiguousarray(
            grids[layer][0].permute(1, 2, 0).numpy(), dtype=np.float32
        )
        for layer in layers
    ]


PRESETS = ("patch-stats", "wide_resnet50")
DEFAULT_LAYERS = {
    "patch-stats": ("patch8",),
    "wide_resnet50": ("layer2", "layer3"),
}


def extract(
    preset: str, img: np.ndarray, layers: tuple[str, ...] | None = None
) -> tuple[tuple[str, ...], list[np.ndarray]]:
    """Run ``preset`` on one image; returns (layer names, one grid per layer)."""
    if preset not in PRESETS:
        raise ValueError(f"unknown backbone {preset!r}; choose from {PRESETS}")
    if layers is None:
        layers = DEFAULT_LAYERS[preset]
    if preset == "patch-stats":
        if layers != ("patch8",):
            raise ValueError("patch-stats has a single layer, 'patch8'")
        return layers, [_patch_stats(img)]
    return layers, _wide_resnet50(img, layers)
