"""Multi-modal embedding pipeline.

A meme is represented by three vectors: a structural image vector, an
aligned image vector and an aligned text vector (the latter two share a
dimension). Real encoder backbones plug in through a registry; the
built-in synthetic backend is a pure seeded-hash construction so that
every test and desk-scale experiment is exactly reproducible without any
pretrained model.

Synthetic construction
----------------------
Every scalar is derived from a SHA-256 hash of a key tuple, mapped to a
uint64 and scaled to [0, 1). Two generators exist:

* profile-free (``encode_meme`` with a synthetic backend): component ``i``
  of vector ``tag`` is ``(2u - 1) / sqrt(dim)`` with
  ``u = unit_hash("enc", seed, tag, meme_key, i)``.
* profile-conditioned (``synthetic_encode``): each vector is a cluster
  center plus per-meme jitter. The first ``ceil(dim / 2)`` components of
  the center are keyed by the sentiment label, the rest by the emotion
  scale tuple, so distinct label profiles occupy distinct, linearly
  separable clusters and both label families are decodable. Center
  components are ``(2u - 1) / sqrt(block_len) / sqrt(2)`` (keeping the
  full center inside the unit ball); jitter components are uniform in
  ``[-jitter, +jitter]`` keyed by the meme id.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import ConfigurationError, InputError
from .labels import EmotionScaleVector, SentimentLabel

VECTOR_TAGS = ("structural", "aligned_image", "aligned_text")

BACKEND_KINDS = ("structural_image", "aligned_image", "aligned_text", "synthetic")


@dataclass(frozen=True)
class MultiModalEmbedding:
    """The three-vector representation of one meme.

    Vectors are stored exactly as the backend produced them (float32 for
    the built-in backends); any normalization is the consumer's job.
    """

    structural_image_vec: np.ndarray
    aligned_image_vec: np.ndarray
    aligned_text_vec: np.ndarray

    def __post_init__(self):
        for tag in VECTOR_TAGS:
            vec = getattr(self, self._field(tag))
            if vec.ndim != 1 or vec.size < 1:
                raise InputError(f"{tag} vector must be 1-D and nonempty")
            if not np.all(np.isfinite(vec)):
                raise InputError(f"{tag} vector contains non-finite values")
        if self.aligned_image_vec.shape != self.aligned_text_vec.shape:
            raise InputError("aligned image and text vectors must share a length")

    @staticmethod
    def _field(tag: str) -> str:
        return {
            "structural": "structural_image_vec",
            "aligned_image": "aligned_image_vec",
            "aligned_text": "aligned_text_vec",
        }[tag]

    @property
    def structural_dim(self) -> int:
        return self.structural_image_vec.size

    @property
    def aligned_dim(self) -> int:
        return self.aligned_image_vec.size

    def concat(self) -> np.ndarray:
        """Flatten to one vector: structural, aligned image, aligned text."""
        return np.concatenate(
            [self.structural_image_vec, self.aligned_image_vec, self.aligned_text_vec]
        )

    def allclose(self, other: "MultiModalEmbedding") -> bool:
        return (
            np.array_equal(self.structural_image_vec, other.structural_image_vec)
            and np.array_equal(self.aligned_image_vec, other.aligned_image_vec)
            and np.array_equal(self.aligned_text_vec, other.aligned_text_vec)
        )


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    kind: str
    output_dim: int
    deterministic: bool
    trainable: bool

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigurationError(f"unknown backend kind {self.kind!r}")
        if self.output_dim < 1:
            raise ConfigurationError("backend output_dim must be positive")
        if self.kind == "synthetic" and not self.deterministic:
            raise ConfigurationError("synthetic backends must be deterministic")


@dataclass(frozen=True)
class LabelProfile:
    """Label tuple that conditions synthetic cluster placement."""

    sentiment: SentimentLabel
    scales: EmotionScaleVector

    def key(self) -> tuple:
        return (self.sentiment.value,) + self.scales.as_tuple()


# --------------------------------------------------------------------------
# Seeded-hash primitives


def _unit_hash(*parts) -> float:
    """Map a key tuple to [0, 1) via SHA-256 (first 8 bytes, little-endian)."""
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(key).digest()
    (value,) = struct.unpack("<Q", digest[:8])
    return value / 2.0**64


def _center_block(seed: int, tag: str, block: str, block_key: tuple, length: int) -> np.ndarray:
    if length == 0:
        return np.zeros(0, dtype=np.float64)
    scale = 1.0 / (np.sqrt(length) * np.sqrt(2.0))
    values = [
        (2.0 * _unit_hash("center", seed, tag, block, *block_key, i) - 1.0) * scale
        for i in range(length)
    ]
    return np.asarray(values, dtype=np.float64)


def profile_center(profile: LabelProfile, seed: int, tag: str, dim: int) -> np.ndarray:
    """Cluster center for one vector of one label profile (float64)."""
    sent_len = (dim + 1) // 2
    sent = _center_block(seed, tag, "snt", (profile.sentiment.value,), sent_len)
    scl = _center_block(seed, tag, "scl", profile.scales.as_tuple(), dim - sent_len)
    return np.concatenate([sent, scl])


def _jitter(seed: int, tag: str, meme_id: str, dim: int, jitter: float) -> np.ndarray:
    values = [
        (2.0 * _unit_hash("jitter", seed, tag, meme_id, i) - 1.0) * jitter
        for i in range(dim)
    ]
    return np.asarray(values, dtype=np.float64)


def synthetic_encode(
    meme_id: str,
    profile: LabelProfile,
    seed: int,
    dims: tuple[int, int],
    jitter: float = 0.05,
) -> MultiModalEmbedding:
    """Profile-conditioned synthetic embedding: cluster center plus jitter.

    Pure function of (meme_id, profile, seed, dims, jitter).
    """
    d_s, d_a = dims
    if d_s < 1 or d_a < 1:
        raise InputError("embedding dims must be positive")
    if jitter < 0:
        raise InputError("jitter must be nonnegative")
    vectors = []
    for tag, dim in zip(VECTOR_TAGS, (d_s, d_a, d_a)):
        center = profile_center(profile, seed, tag, dim)
        vec = center + _jitter(seed, tag, meme_id, dim, jitter)
        vectors.append(vec.astype(np.float32))
    return MultiModalEmbedding(*vectors)


def check_profile_separation(
    profiles: Iterable[LabelProfile],
    seed: int,
    dims: tuple[int, int],
    jitter: float,
) -> None:
    """Assert pairwise center distances exceed 4x the jitter bound.

    Hash-placed centers collide only for degenerate dims; this guards the
    separability contract whenever a synthetic dataset is materialized.
    """
    d_s, d_a = dims
    distinct = {p.key(): p for p in profiles}.values()
    centers = [
        np.concatenate(
            [profile_center(p, seed, tag, dim) for tag, dim in zip(VECTOR_TAGS, (d_s, d_a, d_a))]
        )
        for p in distinct
    ]
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            dist = float(np.linalg.norm(centers[i] - centers[j]))
            if dist <= 4.0 * jitter:
                raise ConfigurationError(
                    f"profile centers only {dist:.4f} apart for jitter {jitter}; "
                    "use a different seed or larger dims"
                )


# --------------------------------------------------------------------------
# Backend registry and encode_meme


class SyntheticBackend:
    """Profile-free deterministic stand-in for all three encoder kinds.

    The meme identity fed to the hash is the (image_ref, caption) pair,
    since encoding has no other handle on the meme.
    """

    def __init__(self, seed: int, dims: tuple[int, int]):
        if dims[0] < 1 or dims[1] < 1:
            raise ConfigurationError("synthetic backend dims must be positive")
        self.seed = seed
        self.dims = dims
        d_s, d_a = dims
        self.descriptor = BackendDescriptor(
            "synthetic", "synthetic", d_s + 2 * d_a, deterministic=True, trainable=False
        )

    def encode_tuple(self, image_ref, caption: str) -> MultiModalEmbedding:
        meme_key = f"{'' if image_ref is None else image_ref}|{caption}"
        d_s, d_a = self.dims
        vectors = []
        for tag, dim in zip(VECTOR_TAGS, (d_s, d_a, d_a)):
            scale = 1.0 / np.sqrt(dim)
            values = [
                (2.0 * _unit_hash("enc", self.seed, tag, meme_key, i) - 1.0) * scale
                for i in range(dim)
            ]
            vectors.append(np.asarray(values, dtype=np.float32))
        return MultiModalEmbedding(*vectors)


_KIND_TO_TAG = {
    "structural_image": "structural",
    "aligned_image": "aligned_image",
    "aligned_text": "aligned_text",
}

_BACKEND_FACTORIES: dict[str, Callable[..., object]] = {}


def register_backend(name: str, factory: Callable[..., object]) -> None:
    """Register a backend factory; real pretrained adapters hook in here."""
    _BACKEND_FACTORIES[name] = factory


def create_backend(name: str, **kwargs):
    try:
        factory = _BACKEND_FACTORIES[name]
    except KeyError:
        raise ConfigurationError(
            f"no backend named {name!r}; registered: {sorted(_BACKEND_FACTORIES)}"
        ) from None
    return factory(**kwargs)


register_backend("synthetic", SyntheticBackend)


def encode_meme(image_ref, caption: str, backends) -> MultiModalEmbedding:
    """Encode one meme into the three-vector tuple.

    ``backends`` is either a single synthetic backend standing in for all
    three encoder kinds, or a collection with exactly one backend per
    kind (structural_image, aligned_image, aligned_text), each exposing
    ``descriptor`` and ``encode_vector(image_ref, caption)``.
    """
    if not isinstance(backends, (list, tuple, set, frozenset)):
        backends = [backends]
    backends = list(backends)
    kinds = [b.descriptor.kind for b in backends]
    if kinds == ["synthetic"]:
        emb = backends[0].encode_tuple(image_ref, caption)
        declared = backends[0].descriptor.output_dim
        actual = emb.structural_dim + 2 * emb.aligned_dim
        if declared != actual:
            raise ConfigurationError(
                f"synthetic backend declared dim {declared} but produced {actual}"
            )
        return emb
    if sorted(kinds) != sorted(_KIND_TO_TAG):
        raise ConfigurationError(
            f"need one backend per kind {sorted(_KIND_TO_TAG)}, got {sorted(kinds)}"
        )
    by_kind = {b.descriptor.kind: b for b in backends}
    parts = {}
    for kind, backend in by_kind.items():
        vec = np.asarray(backend.encode_vector(image_ref, caption), dtype=np.float32)
        if vec.ndim != 1 or vec.size != backend.descriptor.output_dim:
            raise ConfigurationError(
                f"{kind} backend declared dim {backend.descriptor.output_dim} "
                f"but produced shape {vec.shape}"
            )
        parts[kind] = vec
    if by_kind["aligned_image"].descriptor.output_dim != by_kind[
        "aligned_text"
    ].descriptor.output_dim:
        raise ConfigurationError("aligned image/text backends must share output_dim")
    return MultiModalEmbedding(
        parts["structural_image"], parts["aligned_image"], parts["aligned_text"]
    )


def encode_split(
    records,
    seed: int,
    dims: tuple[int, int],
    jitter: float = 0.05,
) -> dict[str, MultiModalEmbedding]:
    """Synthesize profile-conditioned embeddings for every record.

    Checks the cluster-separation contract over the profiles present.
    """
    profiles = [LabelProfile(r.sentiment, r.scales) for r in records]
    if profiles and jitter > 0:
        check_profile_separation(profiles, seed, dims, jitter)
    return {
        r.meme_id: synthetic_encode(r.meme_id, p, seed, dims, jitter)
        for r, p in zip(records, profiles)
    }
