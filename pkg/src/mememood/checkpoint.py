"""Versioned binary checkpoint container.

Layout: magic ``MMCK``, version byte, model type byte (1 = sentiment
model family, 2 = emotion classifier family), a typed metadata block,
then named float32 LE parameter arrays. Files are written to a temp path
and renamed into place so readers never observe a partial file.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointIntegrityError

MAGIC = b"MMCK"
FORMAT_VERSION = 1

KIND_CTM = 1
KIND_CEC = 2

_TYPE_F32 = 0
_TYPE_U32 = 1
_TYPE_I64 = 2
_TYPE_STR = 3
_TYPE_F64 = 4


def _pack_meta(meta: dict) -> bytes:
    out = [struct.pack("<H", len(meta))]
    for key, value in meta.items():
        kb = key.encode("utf-8")
        out.append(struct.pack("<H", len(kb)))
        out.append(kb)
        if isinstance(value, bool):
            raise CheckpointIntegrityError(f"boolean metadata not supported: {key}")
        if isinstance(value, int):
            if 0 <= value <= 0xFFFFFFFF and not key.endswith("_i64"):
                out.append(struct.pack("<BI", _TYPE_U32, value))
            else:
                out.append(struct.pack("<Bq", _TYPE_I64, value))
        elif isinstance(value, float):
            out.append(struct.pack("<Bd", _TYPE_F64, value))
        elif isinstance(value, np.float32):
            out.append(struct.pack("<Bf", _TYPE_F32, float(value)))
        elif isinstance(value, str):
            vb = value.encode("utf-8")
            out.append(struct.pack("<BH", _TYPE_STR, len(vb)))
            out.append(vb)
        else:
            raise CheckpointIntegrityError(
                f"unsupported metadata type for {key}: {type(value).__name__}"
            )
    return b"".join(out)


def save_checkpoint(path, kind: int, meta: dict, arrays: dict) -> None:
    """Write atomically: temp file in the same directory, then rename."""
    path = Path(path)
    chunks = [MAGIC, bytes([FORMAT_VERSION, kind]), _pack_meta(meta)]
    chunks.append(struct.pack("<H", len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            chunks.append(struct.pack("<I", dim))
        chunks.append(arr.tobytes())
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise CheckpointIntegrityError(
                f"truncated while reading {what} (at byte offset {self.pos})"
            )
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path) -> tuple[int, dict, dict]:
    """Return (kind, metadata, arrays); raises on any corruption."""
    data = Path(path).read_bytes()
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointIntegrityError(f"bad magic in {path}")
    (version, kind) = r.unpack("<BB", "header")
    if version != FORMAT_VERSION:
        raise CheckpointIntegrityError(f"unsupported checkpoint version {version}")
    if kind not in (KIND_CTM, KIND_CEC):
        raise CheckpointIntegrityError(f"unknown model type tag {kind}")
    meta = {}
    (n_meta,) = r.unpack("<H", "metadata count")
    for _ in range(n_meta):
        (klen,) = r.unpack("<H", "metadata key length")
        key = r.take(klen, "metadata key").decode("utf-8")
        (typecode,) = r.unpack("<B", "metadata type")
        if typecode == _TYPE_F32:
            (value,) = r.unpack("<f", key)
            meta[key] = np.float32(value)
        elif typecode == _TYPE_U32:
            (meta[key],) = r.unpack("<I", key)
        elif typecode == _TYPE_I64:
            (meta[key],) = r.unpack("<q", key)
        elif typecode == _TYPE_F64:
            (meta[key],) = r.unpack("<d", key)
        elif typecode == _TYPE_STR:
            (vlen,) = r.unpack("<H", key)
            meta[key] = r.take(vlen, key).decode("utf-8")
        else:
            raise CheckpointIntegrityError(f"unknown metadata typecode {typecode}")
    arrays = {}
    (n_arrays,) = r.unpack("<H", "array count")
    for _ in range(n_arrays):
        (nlen,) = r.unpack("<H", "array name length")
        name = r.take(nlen, "array name").decode("utf-8")
        (ndim,) = r.unpack("<B", f"{name} ndim")
        shape = tuple(r.unpack("<I", f"{name} dim")[0] for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = r.take(4 * count, f"{name} data")
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if r.pos != len(data):
        raise CheckpointIntegrityError(
            f"{len(data) - r.pos} trailing bytes after last array"
        )
    return kind, meta, arrays
