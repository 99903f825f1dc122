"""NTSR tensor file format: bit-exact storage of float32 arrays.

Layout (little-endian throughout):

    bytes 0-3   magic "NTSR"
    byte  4     format version (1)
    byte  5     dtype code (1 = little-endian float32)
    byte  6     ndim
    bytes 7-9   zero padding
    then        ndim x u32 extents
    then        raw row-major float32 payload

Arrays round-trip bit-exactly, including negative zero.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CorruptFileError, FormatError, ShapeError

MAGIC = b"NTSR"
VERSION = 1
DTYPE_F32 = 1


def as_tensor(values, shape=None) -> np.ndarray:
    """Coerce to a finite float32 array (the package's universal value type)."""
    t = np.ascontiguousarray(values, dtype=np.float32)
    if shape is not None:
        t = t.reshape(shape)
    if not np.all(np.isfinite(t)):
        raise ShapeError("tensor contains non-finite values")
    return t


def write_tensor(path, t: np.ndarray) -> None:
    """Write `t` to `path` in NTSR format."""
    t = as_tensor(t)
    if t.ndim > 255:
        raise ShapeError(f"ndim {t.ndim} does not fit the header")
    header = MAGIC + struct.pack("<BBB3x", VERSION, DTYPE_F32, t.ndim)
    header += struct.pack(f"<{t.ndim}I", *t.shape)
    Path(path).write_bytes(header + t.tobytes())


def read_tensor(path) -> np.ndarray:
    """Read an NTSR file back into a float32 array, bit-exactly."""
    raw = Path(path).read_bytes()
    if len(raw) < 10:
        raise FormatError(f"{path}: too short for an NTSR header")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, dtype, ndim = struct.unpack_from("<BBB", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    if raw[7:10] != b"\x00\x00\x00":
        raise FormatError(f"{path}: nonzero header padding")
    offset = 10
    if len(raw) < offset + 4 * ndim:
        raise CorruptFileError(f"{path}: truncated extent list")
    shape = struct.unpack_from(f"<{ndim}I", raw, offset)
    offset += 4 * ndim
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    if len(raw) - offset != 4 * count:
        raise CorruptFileError(
            f"{path}: payload is {len(raw) - offset} bytes, expected {4 * count}")
    t = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape)
    if not np.all(np.isfinite(t)):
        raise CorruptFileError(f"{path}: payload contains non-finite values")
    return t.copy()  # own, writable memory (frombuffer views are read-only)
