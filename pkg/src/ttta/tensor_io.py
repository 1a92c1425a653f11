"""Binary tensor file format, P5 mask images, and dataset manifest parsing.

Tensor file layout (all integers little-endian):

    magic      4 bytes  b"TTTA"
    version    uint16   1
    dtype      uint8    0 = float32
    ndim       uint8    1..4
    dims       ndim x uint32
    payload    float32 scalars, row-major, innermost dimension last

Masks are binary P5 portable graymaps (maxval 255) whose pixels are exactly
0 (nominal) or 255 (anomalous).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"TTTA"
VERSION = 1
DTYPE_F32 = 0
MAX_NDIM = 4

NOMINAL = 0
ANOMALOUS = 255


class TensorFormatError(ValueError):
    """Malformed tensor file or tensor that violates the format contract."""


def write_tensor(t: np.ndarray, path: str | os.PathLike) -> None:
    """Write ``t`` as a float32 tensor file. Rejects non-finite values."""
    a = np.ascontiguousarray(t, dtype=np.float32)
    if a.ndim < 1 or a.ndim > MAX_NDIM:
        raise TensorFormatError(f"ndim must be 1..{MAX_NDIM}, got {a.ndim}")
    if any(d < 1 for d in a.shape):
        raise TensorFormatError(f"all dims must be >= 1, got {a.shape}")
    if any(d > 0xFFFFFFFF for d in a.shape):
        raise TensorFormatError(f"dims must fit 32 bits, got {a.shape}")
    finite = np.isfinite(a)
    if not finite.all():
        idx = int(np.flatnonzero(~finite.ravel())[0])
        raise TensorFormatError(f"non-finite scalar at flat index {idx}")
    header = MAGIC + struct.pack(
        "<HBB", VERSION, DTYPE_F32, a.ndim
    ) + struct.pack(f"<{a.ndim}I", *a.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(a.astype("<f4", copy=False).tobytes())


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    """Read a tensor file written by :func:`write_tensor`."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise TensorFormatError(f"{path}: truncated header ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {data[:4]!r}")
    version, dtype_code, ndim = struct.unpack("<HBB", data[4:8])
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if dtype_code != DTYPE_F32:
        raise TensorFormatError(f"{path}: unsupported dtype code {dtype_code}")
    if not 1 <= ndim <= MAX_NDIM:
        raise TensorFormatError(f"{path}: invalid ndim {ndim}")
    dims_end = 8 + 4 * ndim
    if len(data) < dims_end:
        raise TensorFormatError(f"{path}: truncated dims block")
    dims = struct.unpack(f"<{ndim}I", data[8:dims_end])
    if any(d < 1 for d in dims):
        raise TensorFormatError(f"{path}: zero dimension in {dims}")
    n = int(np.prod(dims, dtype=np.int64))
    expected = 4 * n
    payload = data[dims_end:]
    if len(payload) != expected:
        raise TensorFormatError(
            f"{path}: truncated payload (expected {expected} bytes, "
            f"got {len(payload)})"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def write_mask(mask: np.ndarray, path: str | os.PathLike) -> None:
    """Write a {0, 255}-valued H x W mask as a binary P5 graymap."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise TensorFormatError(f"mask must be 2-D, got shape {m.shape}")
    vals = np.unique(m)
    if not np.isin(vals, (NOMINAL, ANOMALOUS)).all():
        raise TensorFormatError(f"mask values must be 0 or 255, got {vals}")
    h, w = m.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(m.astype(np.uint8).tobytes())


def read_mask(path: str | os.PathLike) -> np.ndarray:
    """Read a binary P5 graymap back into a {0, 255} uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise TensorFormatError(f"{path}: not a P5 graymap")
    # header = three whitespace-separated tokens after the magic
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise TensorFormatError(f"{path}: unsupported maxval {maxval}")
    payload = data[pos : pos + w * h]
    if len(payload) != w * h:
        raise TensorFormatError(f"{path}: truncated pixel data")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


@dataclass(frozen=True)
class SampleRecord:
    """One dataset sample: id plus paths to its tensors, relative to the root."""

    sample_id: str
    score_path: str
    feature_paths: tuple[str, ...]
    point_map_path: str = ""
    ground_truth_mask_path: str = ""

    def to_line(self) -> str:
        return "\t".join(
            (
                self.sample_id,
                self.score_path,
                ",".join(self.feature_paths),
                self.point_map_path,
                self.ground_truth_mask_path,
            )
        )

    @classmethod
    def from_line(cls, line: str) -> "SampleRecord":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 5:
            raise TensorFormatError(
                f"manifest line needs 5 tab-separated fields, got {len(parts)}"
            )
        sid, score, feats, pmap, gt = parts
        feat_paths = tuple(p for p in feats.split(",") if p)
        if not feat_paths:
            raise TensorFormatError(f"sample {sid!r}: no feature paths")
        return cls(sid, score, feat_paths, pmap, gt)


def write_manifest(records: list[SampleRecord], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for rec in records:
            fh.write(rec.to_line() + "\n")


def read_manifest(path: str | os.PathLike) -> list[SampleRecord]:
    records = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            if line.strip():
                records.append(SampleRecord.from_line(line))
    return records
