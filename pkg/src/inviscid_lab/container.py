"""Flat binary container for square float64 blocks.

Layout: magic ``IVLB1`` (5 bytes), the side length ``n`` as a 32-bit
little-endian unsigned integer, a one-byte payload kind tag, then ``n*n``
64-bit little-endian floats in row-major order.  Used for reference-solution
caching and for serializing trajectory checkpoints, kernels, and flow
ensembles.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import IoError

MAGIC = b"IVLB1"
_HEADER = struct.Struct("<5sIB")

KINDS = {
    "scalar": 0,
    "vorticity": 1,
    "stream": 2,
    "velocity1": 3,
    "velocity2": 4,
    "density": 5,
    "kernel": 6,
    "positions1": 7,
    "positions2": 8,
}
_KIND_NAMES = {v: k for k, v in KINDS.items()}


def write_block(path, array, kind="scalar"):
    """Write a square float64 array to ``path`` in the container format."""
    arr = np.ascontiguousarray(array, dtype="<f8")
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise IoError(f"container payload must be square, got shape {arr.shape}")
    if kind not in KINDS:
        raise IoError(f"unknown payload kind {kind!r}")
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, arr.shape[0], KINDS[kind]))
            fh.write(arr.tobytes(order="C"))
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return path


def read_block(path):
    """Read a container file, returning ``(array, kind_name)``."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if len(raw) < _HEADER.size:
        raise IoError(f"{path}: truncated header")
    magic, n, kind = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise IoError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * n * n
    if len(raw) != expected:
        raise IoError(f"{path}: expected {expected} bytes, found {len(raw)}")
    if kind not in _KIND_NAMES:
        raise IoError(f"{path}: unknown kind tag {kind}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, n)
    return data.astype(np.float64), _KIND_NAMES[kind]
