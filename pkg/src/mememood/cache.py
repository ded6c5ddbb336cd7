"""Persistent embedding cache.

File layout: magic bytes ``MMEC``, one format version byte (0x01), then
per record: id length (uint16 LE), id bytes (UTF-8), structural and
aligned dims (uint32 LE each), then ``D_s + 2 * D_a`` float32 LE values
in order structural, aligned image, aligned text.

Reads are concurrent-safe; writes must be externally serialized.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .embeddings import MultiModalEmbedding
from .errors import CacheIntegrityError, InputError

MAGIC = b"MMEC"
FORMAT_VERSION = 1


class EmbeddingCache:
    """In-memory id -> embedding map with a binary file representation."""

    def __init__(self):
        self._entries: OrderedDict[str, MultiModalEmbedding] = OrderedDict()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, meme_id: str) -> bool:
        return meme_id in self._entries

    def put(self, meme_id: str, emb: MultiModalEmbedding) -> None:
        if not meme_id:
            raise InputError("meme_id must be nonempty")
        self._entries[meme_id] = emb

    def get(self, meme_id: str) -> MultiModalEmbedding | None:
        """Return the cached embedding, or None when absent."""
        return self._entries.get(meme_id)

    def ids(self) -> list[str]:
        return list(self._entries)

    # -- serialization ------------------------------------------------------

    def save(self, path) -> None:
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(bytes([FORMAT_VERSION]))
            for meme_id, emb in self._entries.items():
                id_bytes = meme_id.encode("utf-8")
                if len(id_bytes) > 0xFFFF:
                    raise InputError(f"meme_id too long to serialize: {meme_id!r}")
                fh.write(struct.pack("<H", len(id_bytes)))
                fh.write(id_bytes)
                fh.write(struct.pack("<II", emb.structural_dim, emb.aligned_dim))
                payload = np.concatenate(
                    [
                        emb.structural_image_vec,
                        emb.aligned_image_vec,
                        emb.aligned_text_vec,
                    ]
                ).astype("<f4", copy=False)
                fh.write(payload.tobytes())

    @classmethod
    def load(cls, path) -> "EmbeddingCache":
        path = Path(path)
        data = path.read_bytes()
        cache = cls()
        if len(data) < 5:
            raise CacheIntegrityError("file shorter than header", offset=0)
        if data[:4] != MAGIC:
            raise CacheIntegrityError(f"bad magic {data[:4]!r}", offset=0)
        if data[4] != FORMAT_VERSION:
            raise CacheIntegrityError(f"unsupported version {data[4]}", offset=4)
        pos = 5
        total = len(data)

        def need(count: int, what: str) -> int:
            if pos + count > total:
                raise CacheIntegrityError(f"truncated while reading {what}", offset=pos)
            return pos + count

        while pos < total:
            record_start = pos
            pos = need(2, "id length")
            (id_len,) = struct.unpack_from("<H", data, record_start)
            pos = need(id_len, "id bytes")
            try:
                meme_id = data[pos - id_len : pos].decode("utf-8")
            except UnicodeDecodeError:
                raise CacheIntegrityError("id is not valid UTF-8", offset=pos - id_len)
            dims_at = pos
            pos = need(8, "dims")
            d_s, d_a = struct.unpack_from("<II", data, dims_at)
            if d_s < 1 or d_a < 1:
                raise CacheIntegrityError(f"invalid dims ({d_s}, {d_a})", offset=dims_at)
            floats_at = pos
            n_floats = d_s + 2 * d_a
            pos = need(4 * n_floats, "vector data")
            values = np.frombuffer(data, dtype="<f4", count=n_floats, offset=floats_at)
            if not np.all(np.isfinite(values)):
                raise CacheIntegrityError("non-finite vector data", offset=floats_at)
            emb = MultiModalEmbedding(
                values[:d_s].copy(),
                values[d_s : d_s + d_a].copy(),
                values[d_s + d_a :].copy(),
            )
            cache._entries[meme_id] = emb
        return cache
