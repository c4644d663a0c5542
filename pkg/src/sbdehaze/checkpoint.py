"""Flat binary container of named tensors plus string metadata.

Byte layout (all integers little-endian)::

    magic      4 bytes   b"SBCK"
    version    u8        FORMAT_VERSION
    n_meta     u32
    n_meta x { key_len u16, key utf-8, val_len u32, val utf-8 }
    n_tensors  u32
    n_tensors x {
        name_len u16, name utf-8,
        dtype    u8    (1 float32, 2 float64, 3 int64)
        ndim     u8
        dims     ndim x u32
        data     prod(dims) x itemsize bytes, C order, little-endian
    }
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SBCK"
FORMAT_VERSION = 1

_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2, np.dtype("<i8"): 3}
_DTYPES = {v: k for k, v in _CODES.items()}


def _to_le(arr):
    arr = np.asarray(arr)
    if arr.dtype.kind in "iub":
        return arr.astype("<i8")
    if arr.dtype == np.float32:
        return arr.astype("<f4")
    return arr.astype("<f8")


def save(path, tensors, meta=None):
    """Write ``tensors`` (name -> array) and ``meta`` (str -> str) to ``path``."""
    meta = meta or {}
    chunks = [MAGIC, struct.pack("<B", FORMAT_VERSION), struct.pack("<I", len(meta))]
    for key, value in meta.items():
        k, v = str(key).encode(), str(value).encode()
        chunks += [struct.pack("<H", len(k)), k, struct.pack("<I", len(v)), v]
    chunks.append(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        arr = np.array(_to_le(value), order="C")
        n = name.encode()
        chunks += [struct.pack("<H", len(n)), n,
                   struct.pack("<BB", _CODES[arr.dtype], arr.ndim),
                   struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load(path):
    """Return ``(tensors, meta)`` read from a container written by :func:`save`."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint container")
    version = buf[4]
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    pos = 5

    def read(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, buf, pos)
        pos += struct.calcsize(fmt)
        return vals

    meta = {}
    (n_meta,) = read("<I")
    for _ in range(n_meta):
        (klen,) = read("<H")
        key = buf[pos:pos + klen].decode()
        pos += klen
        (vlen,) = read("<I")
        meta[key] = buf[pos:pos + vlen].decode()
        pos += vlen
    tensors = {}
    (n_tensors,) = read("<I")
    for _ in range(n_tensors):
        (nlen,) = read("<H")
        name = buf[pos:pos + nlen].decode()
        pos += nlen
        code, ndim = read("<BB")
        shape = read(f"<{ndim}I")
        dtype = _DTYPES[code]
        count = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).reshape(shape).copy()
        pos += count * dtype.itemsize
    return tensors, meta
