"""The QSFM binary matrix format.

Layout: 24-byte header -- magic "QSFM", format version u32 LE, rows u64 LE,
cols u64 LE -- followed by the row-major payload.  Version 1 stores float32
and is what corpus feature files use; version 2 stores float64 and is used
for checkpoint tensors, where training state must round-trip bit-exactly.
Loads always return float64.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import FormatError, VersionError

__all__ = ["write_matrix", "load_feature_matrix", "matrix_bytes", "matrix_from_bytes"]

MAGIC = b"QSFM"
_HEADER = struct.Struct("<4sIQQ")
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


def matrix_bytes(arr: np.ndarray, version: int = 1) -> bytes:
    """Serialize a 2-d array; version 1 casts to float32, version 2 keeps float64."""
    if version not in _DTYPES:
        raise VersionError(f"unsupported QSFM version {version}")
    a = np.ascontiguousarray(arr, dtype=_DTYPES[version])
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise FormatError(f"QSFM stores nonempty matrices, got shape {arr.shape}")
    head = _HEADER.pack(MAGIC, version, a.shape[0], a.shape[1])
    return head + a.tobytes()


def matrix_from_bytes(buf: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError(
            f"{source}: QSFM header needs {_HEADER.size} bytes, file has {len(buf)}"
        )
    magic, version, rows, cols = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version not in _DTYPES:
        raise VersionError(f"{source}: unsupported QSFM version {version}")
    if rows < 1 or cols < 1:
        raise FormatError(f"{source}: rows and cols must be >= 1, got {rows}x{cols}")
    dtype = _DTYPES[version]
    want = rows * cols * dtype.itemsize
    got = len(buf) - _HEADER.size
    if got != want:
        raise FormatError(
            f"{source}: payload has {got} bytes, {rows}x{cols} needs {want}"
        )
    arr = np.frombuffer(buf, dtype=dtype, offset=_HEADER.size).reshape(rows, cols)
    return arr.astype(np.float64)


def write_matrix(path, arr: np.ndarray, version: int = 1) -> None:
    """Write atomically: temp file in the same directory, then rename."""
    data = matrix_bytes(arr, version=version)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_feature_matrix(path) -> np.ndarray:
    """Load a QSFM file as a float64 matrix."""
    with open(path, "rb") as fh:
        buf = fh.read()
    return matrix_from_bytes(buf, source=str(path))
