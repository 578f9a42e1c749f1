"""Flat parameter archive ("NSW1").

Layout, all integers little-endian::

    b"NSW1"                      magic / format version
    uint32 entry_count
    entry_count times:
        uint16 name_length, name bytes (utf-8)
        uint8  ndim, ndim * uint32 extents
        prod(extents) * float64 (little-endian, row-major)
"""
from __future__ import annotations

import io
import os
import struct
from typing import Dict, Mapping

import numpy as np

from .errors import CheckpointError

MAGIC = b"NSW1"


def dumps(entries: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(entries)))
    for name, value in entries.items():
        arr = np.asarray(value, dtype="<f8")  # ascontiguousarray would promote 0-d to 1-d
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes(order="C"))
    return buf.getvalue()


def loads(blob: bytes) -> Dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {blob[:4]!r}, expected {MAGIC!r}")
    view = memoryview(blob)
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(view):
            raise CheckpointError("truncated checkpoint")
        out = struct.unpack_from(fmt, view, pos)
        pos += size
        return out

    (count,) = take("<I")
    entries: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<H")
        if pos + name_len > len(view):
            raise CheckpointError("truncated checkpoint")
        name = bytes(view[pos : pos + name_len]).decode("utf-8")
        pos += name_len
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I") if ndim else ()
        n = int(np.prod(shape)) if ndim else 1
        if pos + 8 * n > len(view):
            raise CheckpointError(f"truncated data for {name}")
        entries[name] = np.frombuffer(view, dtype="<f8", count=n, offset=pos).astype(np.float64).reshape(shape)
        pos += 8 * n
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes in checkpoint")
    return entries


def save(path, entries: Mapping[str, np.ndarray]) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(dumps(entries))
    os.replace(tmp, path)


def load(path) -> Dict[str, np.ndarray]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(blob)
