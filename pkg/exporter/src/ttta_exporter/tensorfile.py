"""Writer for the core toolkit's binary tensor format.

Layout (all integers little-endian):

    magic      4 bytes  b"TTTA"
    version    uint16   1
    dtype      uint8    0 = float32
    ndim       uint8    1..4
    dims       ndim x uint32
    payload    float32 scalars, row-major, innermost dimension last

Only the writer lives here: the exporter produces files, the core reads
them, and integration tests close the loop through the core's reader.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"TTTA"
VERSION = 1
DTYPE_F32 = 0
MAX_NDIM = 4


def write_tensor(t: np.ndarray, path: str | os.PathLike) -> None:
    """Write ``t`` as a float32 tensor file. Rejects non-finite values."""
    a = np.ascontiguousarray(t, dtype=np.float32)
    if a.ndim < 1 or a.ndim > MAX_NDIM:
        raise ValueError(f"ndim must be 1..{MAX_NDIM}, got {a.ndim}")
    if any(d < 1 for d in a.shape):
        raise ValueError(f"all dims must be >= 1, got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("tensor contains non-finite values")
    header = MAGIC + struct.pack(
        "<HBB", VERSION, DTYPE_F32, a.ndim
    ) + struct.pack(f"<{a.ndim}I", *a.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(a.astype("<f4", copy=False).tobytes())
