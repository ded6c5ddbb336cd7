"""Cooperative teaching model for 3-class meme sentiment.

Two teacher/student pairs are trained side by side: the good side learns
"is this meme positive-leaning" (positive and neutral memes are labeled
1), the bad side learns the negative-leaning counterpart. Teachers see
their side's binary pre-label as an extra input feature; students see
only the embedding and are trained to match their teacher's outputs on
noise-perturbed copies of each embedding while keeping those outputs
stable (low standard deviation = high confidence).

The per-side training loss is the sum of four terms:

* teacher binary cross-entropy against the pre-label,
* a KL regularizer between the histogram of teacher outputs and a
  learnable Gaussian prior (gradients reach the prior parameters; the
  histogram itself is a hard binning of detached predictions),
* mean squared error between each perturbed student prediction and the
  meme's (detached) teacher prediction,
* the mean per-meme population standard deviation of the perturbed
  student predictions.

At inference only the students are used: each side's threshold is the
mean of its disturbed training predictions from the final epoch, and the
four-rule decision in ``infer_sentiment`` maps the two scores to a
3-class label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import torch
import torch.nn as nn

from .embeddings import MultiModalEmbedding
from .errors import ConfigurationError, InputError, TrainingDivergenceError
from .labels import SentimentLabel, make_pre_label

BCE_EPS = 1e-7
HIST_EPS = 1e-8
DEFAULT_BIN_COUNT = 20


@dataclass(frozen=True)
class PerturbationConfig:
    """Gaussian disturbance settings for student training."""

    k: int = 1000
    noise_std: float = 0.01
    rng_seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise InputError("k must be >= 2 (std needs two samples)")
        if self.noise_std < 0:
            raise InputError("noise_std must be nonnegative")


@dataclass(frozen=True)
class GaussianPrior:
    """Frozen view of a learnable output-distribution prior."""

    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise InputError("prior std must be positive")


class GaussianPriorModule(nn.Module):
    """Learnable (mean, std) with std kept positive via exp."""

    def __init__(self, mean: float = 0.5, std: float = 0.2):
        super().__init__()
        if not std > 0:
            raise InputError("prior std must be positive")
        self.mean = nn.Parameter(torch.tensor(float(mean)))
        self.log_std = nn.Parameter(torch.tensor(math.log(float(std))))

    @property
    def std(self) -> torch.Tensor:
        return torch.exp(self.log_std)

    def frozen(self) -> GaussianPrior:
        return GaussianPrior(float(self.mean.detach()), float(self.std.detach()))


class SentimentNet(nn.Module):
    """Two-layer perceptron emitting one probability via sigmoid.

    Teachers take the concatenated embedding plus the pre-label bit;
    students take the embedding alone.
    """

    def __init__(self, in_dim: int, hidden: int = 128):
        super().__init__()
        if in_dim < 1 or hidden < 1:
            raise ConfigurationError("in_dim and hidden must be positive")
        self.in_dim = in_dim
        self.hidden = hidden
        self.fc1 = nn.Linear(in_dim, hidden)
        self.fc2 = nn.Linear(hidden, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.in_dim:
            raise ConfigurationError(
                f"expected input dim {self.in_dim}, got {x.shape[-1]}"
            )
        h = torch.tanh(self.fc1(x))
        return torch.sigmoid(self.fc2(h).squeeze(-1))


def init_linear_(linear: nn.Linear, rng: np.random.Generator) -> None:
    """Seeded uniform(-1/sqrt(fan_in), +) init, independent of torch RNG."""
    fan_in = linear.in_features
    bound = 1.0 / math.sqrt(fan_in)
    weight = rng.uniform(-bound, bound, size=linear.weight.shape)
    bias = rng.uniform(-bound, bound, size=linear.bias.shape)
    with torch.no_grad():
        linear.weight.copy_(torch.from_numpy(weight.astype(np.float32)))
        linear.bias.copy_(torch.from_numpy(bias.astype(np.float32)))


def init_sentiment_net_(net: SentimentNet, rng: np.random.Generator) -> None:
    init_linear_(net.fc1, rng)
    init_linear_(net.fc2, rng)


def _as_input_tensor(emb: MultiModalEmbedding, dtype: torch.dtype) -> torch.Tensor:
    return torch.from_numpy(emb.concat()).to(dtype)


def teacher_forward(
    emb: MultiModalEmbedding, pre_label_bit: int, net: SentimentNet
) -> float:
    """Single-meme teacher probability; the bit is appended as a feature."""
    if pre_label_bit not in (0, 1):
        raise InputError("pre_label_bit must be 0 or 1")
    dtype = net.fc1.weight.dtype
    x = torch.cat([_as_input_tensor(emb, dtype), torch.tensor([float(pre_label_bit)], dtype=dtype)])
    with torch.no_grad():
        return float(net(x.unsqueeze(0))[0])


def student_forward(emb: MultiModalEmbedding, net: SentimentNet) -> float:
    dtype = net.fc1.weight.dtype
    x = _as_input_tensor(emb, dtype)
    with torch.no_grad():
        return float(net(x.unsqueeze(0))[0])


# --------------------------------------------------------------------------
# Loss terms


def _as_prob_tensor(values, name: str) -> torch.Tensor:
    if torch.is_tensor(values):
        t = values
    else:
        t = torch.as_tensor(np.asarray(values, dtype=np.float64))
    if t.numel() == 0:
        raise InputError(f"{name} must be nonempty")
    return t.reshape(-1)


def loss_teacher_bce(preds, labels) -> torch.Tensor:
    """Mean binary cross-entropy; predictions clamped away from {0, 1}."""
    p = _as_prob_tensor(preds, "preds")
    y = _as_prob_tensor(labels, "labels").to(p.dtype)
    if p.numel() != y.numel():
        raise InputError(f"length mismatch: {p.numel()} preds vs {y.numel()} labels")
    p = p.clamp(BCE_EPS, 1.0 - BCE_EPS)
    return -(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p)).mean()


@dataclass(frozen=True)
class ProbabilityHistogram:
    """Equal-width histogram over [0, 1]; the last bin is right-closed."""

    bin_count: int
    masses: np.ndarray

    def __post_init__(self):
        if self.bin_count < 2 or self.masses.shape != (self.bin_count,):
            raise InputError("histogram needs >= 2 bins and matching masses")
        if abs(float(self.masses.sum()) - 1.0) > 1e-9 or np.any(self.masses < 0):
            raise InputError("masses must be nonnegative and sum to 1")


def _bin_indices(values: np.ndarray, bin_count: int) -> np.ndarray:
    idx = np.floor(values * bin_count).astype(np.int64)
    return np.clip(idx, 0, bin_count - 1)


def empirical_histogram(preds, bin_count: int) -> ProbabilityHistogram:
    if bin_count < 2:
        raise InputError("bin_count must be >= 2")
    p = _as_prob_tensor(preds, "preds").detach().cpu().numpy().astype(np.float64)
    counts = np.bincount(_bin_indices(p, bin_count), minlength=bin_count)
    return ProbabilityHistogram(bin_count, counts / p.size)


def loss_distribution_reg(preds, prior, bin_count: int = DEFAULT_BIN_COUNT) -> torch.Tensor:
    """KL(P || Q) between the prediction histogram and the prior.

    P is the empirical histogram plus 1e-8, renormalized. Q integrates
    the prior Gaussian per bin, also plus 1e-8, renormalized over [0, 1]
    (the epsilon keeps far-tail bins finite). Differentiable in the prior
    parameters; the histogram is a hard binning of detached predictions.
    """
    hist = empirical_histogram(preds, bin_count)
    mean, std = prior.mean, prior.std
    if torch.is_tensor(mean):
        dtype = mean.dtype
    else:
        dtype = torch.float64
        mean = torch.as_tensor(float(mean), dtype=dtype)
        std = torch.as_tensor(float(std), dtype=dtype)
    p = torch.as_tensor(hist.masses, dtype=dtype) + HIST_EPS
    p = p / p.sum()
    edges = torch.linspace(0.0, 1.0, bin_count + 1, dtype=dtype)
    z = (edges - mean) / (std * math.sqrt(2.0))
    cdf = 0.5 * (1.0 + torch.erf(z))
    q = cdf[1:] - cdf[:-1] + HIST_EPS
    q = q / q.sum()
    return (p * (torch.log(p) - torch.log(q))).sum()


def loss_student_mse(student_preds, teacher_preds) -> torch.Tensor:
    """Mean squared error; the teacher side is treated as constant."""
    s = _as_prob_tensor(student_preds, "student_preds")
    t = _as_prob_tensor(teacher_preds, "teacher_preds")
    if s.numel() != t.numel():
        raise InputError(
            f"length mismatch: {s.numel()} student vs {t.numel()} teacher preds"
        )
    return ((s - t.detach().to(s.dtype)) ** 2).mean()


def _population_std(values: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Divide-by-k standard deviation, exact 0 (with clean gradient) for
    constant inputs."""
    var = ((values - values.mean(dim=dim, keepdim=True)) ** 2).mean(dim=dim)
    safe = torch.sqrt(var.clamp_min(1e-30))
    return torch.where(var == 0, torch.zeros_like(var), safe)


def loss_confidence(preds_over_noise) -> torch.Tensor:
    p = _as_prob_tensor(preds_over_noise, "preds_over_noise")
    if p.numel() < 2:
        raise InputError("need at least 2 disturbed predictions")
    return _population_std(p)


def perturb_embedding(
    emb: MultiModalEmbedding, cfg: PerturbationConfig
) -> list[MultiModalEmbedding]:
    """k noisy copies of one embedding; pure function of (emb, cfg)."""
    rng = np.random.default_rng(cfg.rng_seed)
    flat = emb.concat().astype(np.float64)
    noise = rng.normal(0.0, cfg.noise_std, size=(cfg.k, flat.size))
    d_s, d_a = emb.structural_dim, emb.aligned_dim
    out = []
    for row in flat + noise:
        row32 = row.astype(np.float32)
        out.append(
            MultiModalEmbedding(
                row32[:d_s], row32[d_s : d_s + d_a], row32[d_s + d_a :]
            )
        )
    return out


# --------------------------------------------------------------------------
# State, batch loss, thresholds


@dataclass(frozen=True)
class LossBreakdown:
    l_t: float
    l_dst: float
    l_s: float
    l_cfd: float
    total: float

    @classmethod
    def from_terms(cls, l_t: float, l_dst: float, l_s: float, l_cfd: float):
        return cls(l_t, l_dst, l_s, l_cfd, l_t + l_dst + l_s + l_cfd)

    def terms(self) -> dict:
        return {
            "l_t": self.l_t,
            "l_dst": self.l_dst,
            "l_s": self.l_s,
            "l_cfd": self.l_cfd,
            "total": self.total,
        }


@dataclass
class CtmState:
    """Parameters of both sides plus recorded inference thresholds.

    Training mutates the state on one logical thread; once training ends
    the state is never mutated by inference and may be shared freely.
    """

    good_teacher: SentimentNet
    bad_teacher: SentimentNet
    good_student: SentimentNet
    bad_student: SentimentNet
    good_prior: GaussianPriorModule
    bad_prior: GaussianPriorModule
    perturbation: PerturbationConfig
    tau_good: float = 0.5
    tau_bad: float = 0.5
    bin_count: int = DEFAULT_BIN_COUNT
    emb_dims: tuple[int, int] = (0, 0)

    def __post_init__(self):
        for tau in (self.tau_good, self.tau_bad):
            if not 0.0 <= tau <= 1.0:
                raise InputError("thresholds must lie in [0, 1]")

    def parameters(self):
        for module in (
            self.good_teacher,
            self.bad_teacher,
            self.good_student,
            self.bad_student,
            self.good_prior,
            self.bad_prior,
        ):
            yield from module.parameters()


def new_ctm_state(
    emb_dims: tuple[int, int],
    hidden: int = 128,
    perturbation: PerturbationConfig = PerturbationConfig(),
    seed: int = 0,
    bin_count: int = DEFAULT_BIN_COUNT,
) -> CtmState:
    d = emb_dims[0] + 2 * emb_dims[1]
    rng = np.random.default_rng((seed, 0xC73))
    nets = {}
    for name, in_dim in (
        ("good_teacher", d + 1),
        ("bad_teacher", d + 1),
        ("good_student", d),
        ("bad_student", d),
    ):
        net = SentimentNet(in_dim, hidden)
        init_sentiment_net_(net, rng)
        nets[name] = net
    return CtmState(
        good_teacher=nets["good_teacher"],
        bad_teacher=nets["bad_teacher"],
        good_student=nets["good_student"],
        bad_student=nets["bad_student"],
        good_prior=GaussianPriorModule(),
        bad_prior=GaussianPriorModule(),
        perturbation=perturbation,
        bin_count=bin_count,
        emb_dims=tuple(emb_dims),
    )


@dataclass
class CtmBatchResult:
    total: torch.Tensor
    breakdown: LossBreakdown
    disturbed_good: np.ndarray
    disturbed_bad: np.ndarray


def _stack_batch(
    batch: Sequence[tuple[MultiModalEmbedding, SentimentLabel]], dtype: torch.dtype
):
    if not batch:
        raise InputError("batch must be nonempty")
    rows = np.stack([emb.concat() for emb, _ in batch]).astype(np.float64)
    pre = [make_pre_label(label) for _, label in batch]
    good_bits = torch.as_tensor([p.good_label for p in pre], dtype=dtype)
    bad_bits = torch.as_tensor([p.bad_label for p in pre], dtype=dtype)
    return rows, good_bits, bad_bits


def ctm_batch_loss(
    batch: Sequence[tuple[MultiModalEmbedding, SentimentLabel]],
    state: CtmState,
    noise_rng: np.random.Generator | None = None,
) -> CtmBatchResult:
    """Four-term loss summed over the good and bad sides.

    Both sides evaluate the same k noise-perturbed copies of each
    embedding (one draw per batch). The disturbed student predictions are
    returned for threshold recording.
    """
    dtype = state.good_teacher.fc1.weight.dtype
    rows, good_bits, bad_bits = _stack_batch(batch, dtype)
    cfg = state.perturbation
    if noise_rng is None:
        noise_rng = np.random.default_rng(cfg.rng_seed)
    n, d = rows.shape
    noise = noise_rng.normal(0.0, cfg.noise_std, size=(n, cfg.k, d))
    perturbed = torch.as_tensor(rows[:, None, :] + noise, dtype=dtype)
    x = torch.as_tensor(rows, dtype=dtype)

    terms = {}
    disturbed = {}
    side_totals = []
    for side, teacher, student, prior, bits in (
        ("good", state.good_teacher, state.good_student, state.good_prior, good_bits),
        ("bad", state.bad_teacher, state.bad_student, state.bad_prior, bad_bits),
    ):
        t_in = torch.cat([x, bits.unsqueeze(1)], dim=1)
        t_preds = teacher(t_in)
        l_t = loss_teacher_bce(t_preds, bits)
        l_dst = loss_distribution_reg(t_preds, prior, state.bin_count)
        s_preds = student(perturbed.reshape(n * cfg.k, d)).reshape(n, cfg.k)
        l_s = loss_student_mse(
            s_preds.reshape(-1), t_preds.detach().unsqueeze(1).expand(n, cfg.k).reshape(-1)
        )
        l_cfd = _population_std(s_preds, dim=1).mean()
        side_totals.append(l_t + l_dst + l_s + l_cfd)
        terms[side] = tuple(float(v.detach()) for v in (l_t, l_dst, l_s, l_cfd))
        disturbed[side] = s_preds.detach().reshape(-1).cpu().numpy().astype(np.float64)

    breakdown = LossBreakdown.from_terms(
        *(terms["good"][i] + terms["bad"][i] for i in range(4))
    )
    return CtmBatchResult(
        total=side_totals[0] + side_totals[1],
        breakdown=breakdown,
        disturbed_good=disturbed["good"],
        disturbed_bad=disturbed["bad"],
    )


def record_thresholds(
    state: CtmState,
    epoch_disturbed_preds_good: Sequence[float],
    epoch_disturbed_preds_bad: Sequence[float],
) -> CtmState:
    """Set each side's threshold to the mean of its disturbed predictions.

    Values are rounded to float32 so a checkpoint round-trip cannot move
    a decision boundary.
    """
    taus = []
    for name, preds in (
        ("good", epoch_disturbed_preds_good),
        ("bad", epoch_disturbed_preds_bad),
    ):
        arr = np.asarray(preds, dtype=np.float64)
        if arr.size == 0:
            raise InputError(f"no disturbed predictions for the {name} side")
        taus.append(float(np.float32(arr.mean())))
    return replace(state, tau_good=taus[0], tau_bad=taus[1])


# --------------------------------------------------------------------------
# Inference


def infer_sentiment(g: float, b: float, tau_g: float, tau_b: float) -> SentimentLabel:
    """Three-way decision from the two student scores.

    Rules, evaluated in order:
      1. only the good score clears its threshold -> positive
      2. only the bad score clears its threshold -> negative
      3. both clear: larger threshold margin wins, ties positive
      4. neither clears: negative when the bad score exceeds the good
         score, otherwise neutral
    """
    for name, value in (("g", g), ("b", b), ("tau_g", tau_g), ("tau_b", tau_b)):
        if not 0.0 <= value <= 1.0:
            raise InputError(f"{name} must lie in [0, 1], got {value}")
    good_up = g >= tau_g
    bad_up = b >= tau_b
    if good_up and not bad_up:
        return SentimentLabel.POSITIVE
    if bad_up and not good_up:
        return SentimentLabel.NEGATIVE
    if good_up and bad_up:
        if (g - tau_g) >= (b - tau_b):
            return SentimentLabel.POSITIVE
        return SentimentLabel.NEGATIVE
    if b > g:
        return SentimentLabel.NEGATIVE
    return SentimentLabel.NEUTRAL


def student_scores(state: CtmState, embs: Iterable[MultiModalEmbedding]) -> np.ndarray:
    """Clean-embedding student probabilities, shape (n, 2) as (good, bad)."""
    dtype = state.good_student.fc1.weight.dtype
    rows = np.stack([emb.concat() for emb in embs])
    x = torch.as_tensor(rows, dtype=dtype)
    with torch.no_grad():
        g = state.good_student(x).cpu().numpy()
        b = state.bad_student(x).cpu().numpy()
    return np.stack([g, b], axis=1)


def infer_sentiment_batch(
    state: CtmState, embs: Iterable[MultiModalEmbedding]
) -> list[SentimentLabel]:
    scores = student_scores(state, embs)
    return [
        infer_sentiment(float(np.clip(g, 0.0, 1.0)), float(np.clip(b, 0.0, 1.0)), state.tau_good, state.tau_bad)
        for g, b in scores
    ]


# --------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class CtmTrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    hidden: int = 128
    bin_count: int = DEFAULT_BIN_COUNT
    perturbation: PerturbationConfig = field(
        default_factory=lambda: PerturbationConfig(k=32)
    )

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InputError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise InputError("learning_rate must be nonnegative")


def train_ctm(
    labeled: Sequence[tuple[MultiModalEmbedding, SentimentLabel]],
    config: CtmTrainConfig,
    state: CtmState | None = None,
) -> tuple[CtmState, list[LossBreakdown]]:
    """Gradient training of both sides; returns the state with recorded
    thresholds and the per-epoch loss history.

    Teachers and priors receive gradients from the teacher BCE and the
    distribution regularizer; students from the distillation MSE and the
    confidence term. Fully deterministic for a fixed config and seed when
    torch runs single-threaded.
    """
    if not labeled:
        raise InputError("training data must be nonempty")
    emb0 = labeled[0][0]
    if state is None:
        state = new_ctm_state(
            (emb0.structural_dim, emb0.aligned_dim),
            hidden=config.hidden,
            perturbation=config.perturbation,
            seed=config.seed,
            bin_count=config.bin_count,
        )
    optimizer = torch.optim.SGD(state.parameters(), lr=config.learning_rate)
    n = len(labeled)
    history: list[LossBreakdown] = []
    final_good: list[np.ndarray] = []
    final_bad: list[np.ndarray] = []
    for epoch in range(config.epochs):
        shuffle_rng = np.random.default_rng((config.seed, epoch, 0x5F))
        noise_rng = np.random.default_rng((config.seed, epoch, 0xA1))
        order = shuffle_rng.permutation(n)
        is_final = epoch == config.epochs - 1
        sums = np.zeros(4)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = [labeled[i] for i in idx]
            result = ctm_batch_loss(batch, state, noise_rng=noise_rng)
            for term, value in result.breakdown.terms().items():
                if not math.isfinite(value):
                    raise TrainingDivergenceError(epoch, term)
            optimizer.zero_grad()
            result.total.backward()
            optimizer.step()
            b = result.breakdown
            sums += np.array([b.l_t, b.l_dst, b.l_s, b.l_cfd]) * len(batch)
            if is_final:
                final_good.append(result.disturbed_good)
                final_bad.append(result.disturbed_bad)
        history.append(LossBreakdown.from_terms(*(sums / n)))
    state = record_thresholds(
        state, np.concatenate(final_good), np.concatenate(final_bad)
    )
    return state, history
