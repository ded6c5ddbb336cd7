"""Cascaded classifier for emotion intensity and presence.

A fusion layer combines the three-vector embedding into one fusing
vector. Four per-emotion heads predict intensity logits (4, 4, 4 and 2
classes) from the fusing vector concatenated with the flat embedding.
The cascade head then consumes all 14 softmaxed intensity probabilities
together with the flat embedding and emits four presence probabilities,
so the presence task can weigh how trustworthy the intensity prediction
looks. Training feeds the cascade the predicted (not gold) intensity
probabilities and minimizes the sum of the presence BCE and the
intensity cross-entropy.

The no-cascade variant replaces the cascade head with an independent
presence head over (fusing vector, embedding), with no intensity
feed-through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import torch
import torch.nn as nn

from .embeddings import MultiModalEmbedding
from .errors import ConfigurationError, InputError, TrainingDivergenceError
from .labels import (
    EMOTIONS,
    EmotionPresenceVector,
    EmotionScaleVector,
    SCALE_CLASS_COUNTS,
)
from .ctm import BCE_EPS, init_linear_

SCALE_PROB_TOTAL = sum(SCALE_CLASS_COUNTS)  # 14 cascade inputs


@dataclass(frozen=True)
class ScaleLogits:
    """One logit vector per emotion, lengths (4, 4, 4, 2)."""

    humorous: np.ndarray
    sarcastic: np.ndarray
    offensive: np.ndarray
    motivational: np.ndarray

    def __post_init__(self):
        for name, count in zip(EMOTIONS, SCALE_CLASS_COUNTS):
            vec = getattr(self, name)
            if vec.shape != (count,) or not np.all(np.isfinite(vec)):
                raise InputError(f"{name} logits must be finite with length {count}")

    def as_list(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in EMOTIONS]


class _Mlp(nn.Module):
    def __init__(self, in_dim: int, hidden: int, out_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, hidden)
        self.fc2 = nn.Linear(hidden, out_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(torch.tanh(self.fc1(x)))


class CecModel(nn.Module):
    """Fusion layer, four intensity heads and a presence head."""

    def __init__(
        self,
        emb_dims: tuple[int, int],
        fusion_dim: int = 256,
        hidden: int = 128,
        cascade: bool = True,
    ):
        super().__init__()
        if fusion_dim < 1 or hidden < 1:
            raise ConfigurationError("fusion_dim and hidden must be positive")
        self.emb_dims = tuple(emb_dims)
        d = emb_dims[0] + 2 * emb_dims[1]
        self.flat_dim = d
        self.fusion_dim = fusion_dim
        self.hidden = hidden
        self.cascade = cascade
        self.fusion = nn.Linear(d, fusion_dim)
        self.scale_heads = nn.ModuleList(
            _Mlp(fusion_dim + d, hidden, count) for count in SCALE_CLASS_COUNTS
        )
        if cascade:
            self.presence_head = _Mlp(SCALE_PROB_TOTAL + d, hidden, len(EMOTIONS))
        else:
            self.presence_head = _Mlp(fusion_dim + d, hidden, len(EMOTIONS))

    def init_seeded_(self, rng: np.random.Generator) -> None:
        init_linear_(self.fusion, rng)
        for head in self.scale_heads:
            init_linear_(head.fc1, rng)
            init_linear_(head.fc2, rng)
        init_linear_(self.presence_head.fc1, rng)
        init_linear_(self.presence_head.fc2, rng)

    @property
    def dtype(self) -> torch.dtype:
        return self.fusion.weight.dtype

    def fuse_batch(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.flat_dim:
            raise ConfigurationError(
                f"expected embedding dim {self.flat_dim}, got {x.shape[-1]}"
            )
        return torch.tanh(self.fusion(x))

    def scale_logits_batch(self, fusing: torch.Tensor, x: torch.Tensor) -> list[torch.Tensor]:
        if fusing.shape[-1] != self.fusion_dim:
            raise ConfigurationError(
                f"expected fusing dim {self.fusion_dim}, got {fusing.shape[-1]}"
            )
        h = torch.cat([fusing, x], dim=-1)
        return [head(h) for head in self.scale_heads]

    def presence_probs_batch(
        self,
        scale_probs: list[torch.Tensor],
        x: torch.Tensor,
        fusing: torch.Tensor | None = None,
    ) -> torch.Tensor:
        if self.cascade:
            for probs, count in zip(scale_probs, SCALE_CLASS_COUNTS):
                if probs.shape[-1] != count:
                    raise ConfigurationError("scale probability widths do not match")
                sums = probs.sum(dim=-1)
                if torch.any((sums - 1.0).abs() > 1e-6):
                    raise InputError("scale probabilities must sum to 1")
            h = torch.cat(list(scale_probs) + [x], dim=-1)
        else:
            if fusing is None:
                fusing = self.fuse_batch(x)
            h = torch.cat([fusing, x], dim=-1)
        return torch.sigmoid(self.presence_head(h))

    def forward(self, x: torch.Tensor):
        fusing = self.fuse_batch(x)
        logits = self.scale_logits_batch(fusing, x)
        probs = [torch.softmax(l, dim=-1) for l in logits]
        presence = self.presence_probs_batch(probs, x, fusing=fusing)
        return logits, probs, presence


def new_cec_model(
    emb_dims: tuple[int, int],
    fusion_dim: int = 256,
    hidden: int = 128,
    cascade: bool = True,
    seed: int = 0,
) -> CecModel:
    model = CecModel(emb_dims, fusion_dim=fusion_dim, hidden=hidden, cascade=cascade)
    model.init_seeded_(np.random.default_rng((seed, 0xCEC)))
    return model


def _emb_tensor(emb: MultiModalEmbedding, dtype: torch.dtype) -> torch.Tensor:
    return torch.from_numpy(emb.concat()).to(dtype).unsqueeze(0)


def fuse(emb: MultiModalEmbedding, model: CecModel) -> np.ndarray:
    """Single-meme fusing vector (affine map plus tanh)."""
    with torch.no_grad():
        return model.fuse_batch(_emb_tensor(emb, model.dtype))[0].cpu().numpy()


def scale_heads_forward(
    fusing: np.ndarray, emb: MultiModalEmbedding, model: CecModel
) -> ScaleLogits:
    f = torch.as_tensor(fusing, dtype=model.dtype).unsqueeze(0)
    with torch.no_grad():
        logits = model.scale_logits_batch(f, _emb_tensor(emb, model.dtype))
    return ScaleLogits(*(l[0].cpu().numpy() for l in logits))


def cascade_forward(
    scale_probs: Sequence[np.ndarray], emb: MultiModalEmbedding, model: CecModel
) -> np.ndarray:
    """Presence probabilities from predicted intensity probabilities."""
    if not model.cascade:
        raise ConfigurationError("model was built without the cascade head")
    probs = [
        torch.as_tensor(np.asarray(p, dtype=np.float64), dtype=model.dtype).unsqueeze(0)
        for p in scale_probs
    ]
    with torch.no_grad():
        presence = model.presence_probs_batch(probs, _emb_tensor(emb, model.dtype))
    return presence[0].cpu().numpy()


# --------------------------------------------------------------------------
# Losses


def _presence_tensor(rows, name: str, dtype=None) -> torch.Tensor:
    if torch.is_tensor(rows):
        t = rows
    else:
        t = torch.as_tensor(np.asarray(rows, dtype=np.float64))
    if t.ndim != 2 or t.shape[-1] != len(EMOTIONS):
        raise InputError(f"{name} must have shape (n, {len(EMOTIONS)})")
    if t.shape[0] == 0:
        raise InputError(f"{name} must be nonempty")
    return t if dtype is None else t.to(dtype)


def loss_emotion_bce(presence_probs, labels) -> torch.Tensor:
    """Presence BCE, averaged over samples and summed over emotions."""
    p = _presence_tensor(presence_probs, "presence_probs")
    y = _presence_tensor(labels, "labels", dtype=p.dtype)
    if p.shape != y.shape:
        raise InputError(f"shape mismatch: {tuple(p.shape)} vs {tuple(y.shape)}")
    p = p.clamp(BCE_EPS, 1.0 - BCE_EPS)
    per_emotion = -(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p)).mean(dim=0)
    return per_emotion.sum()


def loss_scale_ce(scale_logits: Sequence, labels) -> torch.Tensor:
    """Softmax cross-entropy per emotion, sample-averaged then summed."""
    if len(scale_logits) != len(EMOTIONS):
        raise InputError(f"need {len(EMOTIONS)} logit blocks")
    label_rows = np.asarray(labels, dtype=np.int64)
    if label_rows.ndim != 2 or label_rows.shape[-1] != len(EMOTIONS):
        raise InputError(f"labels must have shape (n, {len(EMOTIONS)})")
    total = None
    for j, (block, count) in enumerate(zip(scale_logits, SCALE_CLASS_COUNTS)):
        t = block if torch.is_tensor(block) else torch.as_tensor(
            np.asarray(block, dtype=np.float64)
        )
        if t.ndim != 2 or t.shape[-1] != count or t.shape[0] != label_rows.shape[0]:
            raise InputError(
                f"{EMOTIONS[j]} logits must have shape (n, {count})"
            )
        y = label_rows[:, j]
        if y.min() < 0 or y.max() >= count:
            raise InputError(f"{EMOTIONS[j]} label outside 0..{count - 1}")
        log_probs = torch.log_softmax(t, dim=-1)
        picked = log_probs[torch.arange(t.shape[0]), torch.as_tensor(y)]
        term = -picked.mean()
        total = term if total is None else total + term
    return total


@dataclass(frozen=True)
class CecLossBreakdown:
    l_b: float
    l_c: float
    total: float

    @classmethod
    def from_terms(cls, l_b: float, l_c: float):
        return cls(l_b, l_c, l_b + l_c)

    def terms(self) -> dict:
        return {"l_b": self.l_b, "l_c": self.l_c, "total": self.total}


@dataclass
class CecBatchResult:
    total: torch.Tensor
    breakdown: CecLossBreakdown


def cec_batch_loss(
    batch: Sequence[tuple[MultiModalEmbedding, EmotionScaleVector, EmotionPresenceVector]],
    model: CecModel,
) -> CecBatchResult:
    """Joint loss; the presence head sees predicted intensity probabilities."""
    if not batch:
        raise InputError("batch must be nonempty")
    rows = np.stack([emb.concat() for emb, _, _ in batch])
    x = torch.as_tensor(rows, dtype=model.dtype)
    scale_labels = [scales.as_tuple() for _, scales, _ in batch]
    presence_labels = [presence.as_tuple() for _, _, presence in batch]
    logits, probs, presence = model(x)
    l_c = loss_scale_ce(logits, scale_labels)
    l_b = loss_emotion_bce(presence, presence_labels)
    return CecBatchResult(
        total=l_b + l_c,
        breakdown=CecLossBreakdown.from_terms(float(l_b.detach()), float(l_c.detach())),
    )


# --------------------------------------------------------------------------
# Training and inference


@dataclass(frozen=True)
class CecTrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    fusion_dim: int = 256
    hidden: int = 128
    cascade: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InputError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise InputError("learning_rate must be nonnegative")


def train_cec(
    labeled: Sequence[tuple[MultiModalEmbedding, EmotionScaleVector, EmotionPresenceVector]],
    config: CecTrainConfig,
    model: CecModel | None = None,
) -> tuple[CecModel, list[CecLossBreakdown]]:
    if not labeled:
        raise InputError("training data must be nonempty")
    emb0 = labeled[0][0]
    if model is None:
        model = new_cec_model(
            (emb0.structural_dim, emb0.aligned_dim),
            fusion_dim=config.fusion_dim,
            hidden=config.hidden,
            cascade=config.cascade,
            seed=config.seed,
        )
    optimizer = torch.optim.SGD(model.parameters(), lr=config.learning_rate)
    n = len(labeled)
    history: list[CecLossBreakdown] = []
    for epoch in range(config.epochs):
        shuffle_rng = np.random.default_rng((config.seed, epoch, 0x5F))
        order = shuffle_rng.permutation(n)
        sums = np.zeros(2)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = [labeled[i] for i in idx]
            result = cec_batch_loss(batch, model)
            for term, value in result.breakdown.terms().items():
                if not math.isfinite(value):
                    raise TrainingDivergenceError(epoch, term)
            optimizer.zero_grad()
            result.total.backward()
            optimizer.step()
            b = result.breakdown
            sums += np.array([b.l_b, b.l_c]) * len(batch)
        history.append(CecLossBreakdown.from_terms(*(sums / n)))
    return model, history


def infer_cec(
    emb: MultiModalEmbedding, model: CecModel
) -> tuple[EmotionScaleVector, EmotionPresenceVector]:
    """Intensity by per-emotion argmax (ties to the lower index) and
    presence by thresholding at 0.5, from one forward pass."""
    scales, presence = infer_cec_batch([emb], model)
    return scales[0], presence[0]


def infer_cec_batch(
    embs: Iterable[MultiModalEmbedding], model: CecModel
) -> tuple[list[EmotionScaleVector], list[EmotionPresenceVector]]:
    rows = np.stack([emb.concat() for emb in embs])
    x = torch.as_tensor(rows, dtype=model.dtype)
    with torch.no_grad():
        logits, _, presence = model(x)
        scale_idx = [l.argmax(dim=-1).cpu().numpy() for l in logits]
        bits = (presence >= 0.5).to(torch.int64).cpu().numpy()
    scale_out = [
        EmotionScaleVector(*(int(scale_idx[j][i]) for j in range(len(EMOTIONS))))
        for i in range(rows.shape[0])
    ]
    presence_out = [
        EmotionPresenceVector(*(int(v) for v in bits[i])) for i in range(rows.shape[0])
    ]
    return scale_out, presence_out
