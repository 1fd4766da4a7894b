"""Binary tensor records.

One record is: magic ``DTNS``, u32 version, u32 rank, u64 extents,
u8 dtype tag (1 = float32, 2 = float64), then the raw values.  All
integers and floats are little-endian.  Round trips are bit-exact.
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import ConfigurationError

MAGIC = b"DTNS"
VERSION = 1

_TAG_FOR_DTYPE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
_DTYPE_FOR_TAG = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


def write_tensor(fh, arr: np.ndarray) -> None:
    dtype = np.dtype(arr.dtype)
    if dtype not in _TAG_FOR_DTYPE:
        raise ConfigurationError(f"unsupported dtype for tensor record: {dtype}")
    fh.write(MAGIC)
    fh.write(struct.pack("<I", VERSION))
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(struct.pack("<B", _TAG_FOR_DTYPE[dtype]))
    fh.write(np.ascontiguousarray(arr).astype(dtype.newbyteorder("<"), copy=False).tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ConfigurationError(f"truncated tensor record: wanted {n} bytes, got {len(buf)}")
    return buf


def read_tensor(fh) -> np.ndarray:
    if _read_exact(fh, 4) != MAGIC:
        raise ConfigurationError("bad tensor record magic")
    (version,) = struct.unpack("<I", _read_exact(fh, 4))
    if version != VERSION:
        raise ConfigurationError(f"unsupported tensor record version {version}")
    (rank,) = struct.unpack("<I", _read_exact(fh, 4))
    shape = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank)) if rank else ()
    (tag,) = struct.unpack("<B", _read_exact(fh, 1))
    if tag not in _DTYPE_FOR_TAG:
        raise ConfigurationError(f"unknown dtype tag {tag}")
    dtype = _DTYPE_FOR_TAG[tag]
    count = 1
    for e in shape:
        count *= e
    raw = _read_exact(fh, count * dtype.itemsize)
    arr = np.frombuffer(raw, dtype=dtype).astype(dtype.newbyteorder("="), copy=True)
    return arr.reshape(shape)
