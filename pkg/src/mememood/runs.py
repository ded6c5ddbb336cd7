"""Training run orchestration: configs, variants, reports, checkpoints.

A run takes a record list, splits it 5:1:1 (configurable), synthesizes or
receives embeddings, trains the requested model variant and reports
weighted F1 on every split. Sentiment-task variants:

* ``full`` - both teacher/student pairs with learned thresholds
* ``no_teacher`` - students trained directly on pre-labels with BCE
  (keeping the confidence term and learned thresholds)
* ``fixed_threshold`` - full training, but both thresholds forced to 0.5
* ``no_teacher_no_threshold`` - both removals combined
* ``simple_classifier`` - one linear layer to 3 classes

Emotion-task variants are ``full`` (cascade) and ``no_cascade``
(independent presence head).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import torch
import torch.nn as nn

from . import checkpoint as ckpt
from .cec import (
    CecModel,
    CecTrainConfig,
    infer_cec_batch,
    new_cec_model,
    train_cec,
)
from .ctm import (
    CtmState,
    CtmTrainConfig,
    LossBreakdown,
    PerturbationConfig,
    _population_std,
    infer_sentiment_batch,
    init_linear_,
    loss_teacher_bce,
    new_ctm_state,
    record_thresholds,
    train_ctm,
)
from .data import DatasetSplit, split_dataset
from .embeddings import MultiModalEmbedding, encode_split
from .errors import (
    CheckpointIntegrityError,
    ConfigurationError,
    InputError,
    TrainingDivergenceError,
)
from .labels import SentimentLabel, make_pre_label
from .metrics import task_b_f1, task_c_f1, weighted_f1

SENTIMENT_ORDER = (
    SentimentLabel.NEGATIVE,
    SentimentLabel.NEUTRAL,
    SentimentLabel.POSITIVE,
)

VARIANTS_A = (
    "full",
    "no_teacher",
    "fixed_threshold",
    "no_teacher_no_threshold",
    "simple_classifier",
)
VARIANTS_BC = ("full", "no_cascade")


@dataclass(frozen=True)
class RunConfig:
    task: str = "A"
    variant: str = "full"
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    hidden: int = 128
    fusion_dim: int = 256
    bin_count: int = 20
    dims: tuple[int, int] = (16, 8)
    jitter: float = 0.05
    split_ratios: tuple[float, float, float] = (5.0, 1.0, 1.0)
    perturbation: PerturbationConfig = field(
        default_factory=lambda: PerturbationConfig(k=32)
    )
    deterministic: bool = True

    def __post_init__(self):
        if self.task not in ("A", "B_C"):
            raise ConfigurationError(f"unknown task {self.task!r}")
        allowed = VARIANTS_A if self.task == "A" else VARIANTS_BC
        if self.variant not in allowed:
            raise ConfigurationError(
                f"variant {self.variant!r} is not valid for task {self.task}; "
                f"allowed: {allowed}"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        d["split_ratios"] = list(self.split_ratios)
        d["perturbation"] = {
            "k": self.perturbation.k,
            "noise_std": self.perturbation.noise_std,
            "rng_seed": self.perturbation.rng_seed,
        }
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        d = dict(d)
        if "perturbation" in d and isinstance(d["perturbation"], Mapping):
            d["perturbation"] = PerturbationConfig(**d["perturbation"])
        for key in ("dims", "split_ratios"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RunReport:
    task: str
    variant: str
    config: dict
    history: list[dict]
    metrics: dict
    thresholds: dict | None
    wall_clock: float

    def to_json(self, include_timing: bool = False) -> str:
        payload = {
            "task": self.task,
            "variant": self.variant,
            "config": self.config,
            "history": self.history,
            "metrics": self.metrics,
            "thresholds": self.thresholds,
        }
        if include_timing:
            payload["wall_clock"] = self.wall_clock
        return json.dumps(payload, indent=2, sort_keys=True)


@dataclass
class SimpleClassifier:
    """Linear 3-way sentiment baseline over the flat embedding."""

    linear: nn.Linear
    emb_dims: tuple[int, int]

    def predict(self, embs: Sequence[MultiModalEmbedding]) -> list[SentimentLabel]:
        rows = np.stack([e.concat() for e in embs])
        x = torch.as_tensor(rows, dtype=self.linear.weight.dtype)
        with torch.no_grad():
            idx = self.linear(x).argmax(dim=-1).cpu().numpy()
        return [SENTIMENT_ORDER[i] for i in idx]


@dataclass
class TrainedRun:
    config: RunConfig
    report: RunReport
    model: object  # CtmState | CecModel | SimpleClassifier


def _prepare(records, config: RunConfig, embeddings):
    if embeddings is None:
        embeddings = encode_split(records, config.seed, config.dims, config.jitter)
    missing = [r.meme_id for r in records if r.meme_id not in embeddings]
    if missing:
        raise InputError(f"no embedding for {len(missing)} records, e.g. {missing[0]!r}")
    return embeddings


def _ctm_config(config: RunConfig) -> CtmTrainConfig:
    return CtmTrainConfig(
        epochs=config.epochs,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        seed=config.seed,
        hidden=config.hidden,
        bin_count=config.bin_count,
        perturbation=config.perturbation,
    )


def _train_students_only(labeled, config: RunConfig) -> tuple[CtmState, list[LossBreakdown]]:
    """Teacher-free training: per-side BCE on perturbed student outputs
    against the pre-label bit, plus the confidence term. The BCE is
    reported in the l_t slot (it is the pre-label cross-entropy)."""
    emb0 = labeled[0][0]
    tcfg = _ctm_config(config)
    state = new_ctm_state(
        (emb0.structural_dim, emb0.aligned_dim),
        hidden=tcfg.hidden,
        perturbation=tcfg.perturbation,
        seed=tcfg.seed,
        bin_count=tcfg.bin_count,
    )
    params = list(state.good_student.parameters()) + list(state.bad_student.parameters())
    optimizer = torch.optim.SGD(params, lr=tcfg.learning_rate)
    n = len(labeled)
    dtype = state.good_student.fc1.weight.dtype
    rows_all = np.stack([emb.concat() for emb, _ in labeled]).astype(np.float64)
    pre = [make_pre_label(label) for _, label in labeled]
    bits = {
        "good": np.array([p.good_label for p in pre], dtype=np.float64),
        "bad": np.array([p.bad_label for p in pre], dtype=np.float64),
    }
    history: list[LossBreakdown] = []
    final = {"good": [], "bad": []}
    cfg = tcfg.perturbation
    for epoch in range(tcfg.epochs):
        shuffle_rng = np.random.default_rng((tcfg.seed, epoch, 0x5F))
        noise_rng = np.random.default_rng((tcfg.seed, epoch, 0xA1))
        order = shuffle_rng.permutation(n)
        is_final = epoch == tcfg.epochs - 1
        sums = np.zeros(4)
        for start in range(0, n, tcfg.batch_size):
            idx = order[start : start + tcfg.batch_size]
            rows = rows_all[idx]
            m, d = rows.shape
            noise = noise_rng.normal(0.0, cfg.noise_std, size=(m, cfg.k, d))
            perturbed = torch.as_tensor(rows[:, None, :] + noise, dtype=dtype)
            total = None
            batch_terms = np.zeros(4)
            for side, student in (
                ("good", state.good_student),
                ("bad", state.bad_student),
            ):
                y = torch.as_tensor(bits[side][idx], dtype=dtype)
                preds = student(perturbed.reshape(m * cfg.k, d)).reshape(m, cfg.k)
                l_bce = loss_teacher_bce(
                    preds.reshape(-1), y.unsqueeze(1).expand(m, cfg.k).reshape(-1)
                )
                l_cfd = _population_std(preds, dim=1).mean()
                side_total = l_bce + l_cfd
                total = side_total if total is None else total + side_total
                batch_terms += np.array(
                    [float(l_bce.detach()), 0.0, 0.0, float(l_cfd.detach())]
                )
                if is_final:
                    final[side].append(preds.detach().reshape(-1).cpu().numpy())
            if not math.isfinite(float(total.detach())):
                raise TrainingDivergenceError(epoch, "total")
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            sums += batch_terms * m
        history.append(LossBreakdown.from_terms(*(sums / n)))
    state = record_thresholds(
        state, np.concatenate(final["good"]), np.concatenate(final["bad"])
    )
    return state, history


def _train_simple_classifier(labeled, config: RunConfig):
    emb0 = labeled[0][0]
    d = emb0.structural_dim + 2 * emb0.aligned_dim
    linear = nn.Linear(d, 3)
    init_linear_(linear, np.random.default_rng((config.seed, 0x51)))
    optimizer = torch.optim.SGD(linear.parameters(), lr=config.learning_rate)
    rows_all = np.stack([emb.concat() for emb, _ in labeled]).astype(np.float64)
    y_all = np.array([SENTIMENT_ORDER.index(label) for _, label in labeled])
    n = len(labeled)
    history = []
    ce = nn.CrossEntropyLoss()
    for epoch in range(config.epochs):
        shuffle_rng = np.random.default_rng((config.seed, epoch, 0x5F))
        order = shuffle_rng.permutation(n)
        total_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x = torch.as_tensor(rows_all[idx], dtype=linear.weight.dtype)
            y = torch.as_tensor(y_all[idx])
            loss = ce(linear(x), y)
            if not math.isfinite(float(loss.detach())):
                raise TrainingDivergenceError(epoch, "total")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total_sum += float(loss.detach()) * len(idx)
        history.append(
            LossBreakdown.from_terms(total_sum / n, 0.0, 0.0, 0.0)
        )
    return SimpleClassifier(linear, (emb0.structural_dim, emb0.aligned_dim)), history


def _task_a_metrics(model, split: DatasetSplit, embeddings) -> dict:
    if not split.records:
        return {}
    embs = [embeddings[r.meme_id] for r in split.records]
    golds = [r.sentiment.value for r in split.records]
    if isinstance(model, SimpleClassifier):
        preds = [s.value for s in model.predict(embs)]
    else:
        preds = [s.value for s in infer_sentiment_batch(model, embs)]
    return {"weighted_f1": weighted_f1(preds, golds)}


def _task_bc_metrics(model: CecModel, split: DatasetSplit, embeddings) -> dict:
    if not split.records:
        return {}
    embs = [embeddings[r.meme_id] for r in split.records]
    scales, presence = infer_cec_batch(embs, model)
    gold_scales = [r.scales.as_tuple() for r in split.records]
    gold_presence = [r.presence.as_tuple() for r in split.records]
    b = task_b_f1([p.as_tuple() for p in presence], gold_presence)
    c = task_c_f1([s.as_tuple() for s in scales], gold_scales)
    return {
        "task_b": {"per_emotion": b.per_emotion, "aggregate": b.aggregate},
        "task_c": {"per_emotion": c.per_emotion, "aggregate": c.aggregate},
    }


def run(
    config: RunConfig,
    records: Sequence,
    embeddings: Mapping[str, MultiModalEmbedding] | None = None,
) -> TrainedRun:
    """Train one variant and evaluate it on every split."""
    if config.deterministic:
        torch.set_num_threads(1)
    started = time.perf_counter()
    embeddings = _prepare(records, config, embeddings)
    train_split, valid_split, test_split = split_dataset(
        records, config.split_ratios, config.seed
    )
    thresholds = None
    if config.task == "A":
        labeled = [
            (embeddings[r.meme_id], r.sentiment) for r in train_split.records
        ]
        if config.variant in ("full", "fixed_threshold"):
            model, history = train_ctm(labeled, _ctm_config(config))
        elif config.variant in ("no_teacher", "no_teacher_no_threshold"):
            model, history = _train_students_only(labeled, config)
        else:
            model, history = _train_simple_classifier(labeled, config)
        if config.variant in ("fixed_threshold", "no_teacher_no_threshold"):
            model = replace(model, tau_good=0.5, tau_bad=0.5)
        if isinstance(model, CtmState):
            thresholds = {"tau_good": model.tau_good, "tau_bad": model.tau_bad}
        metric_fn = _task_a_metrics
    else:
        labeled = [
            (embeddings[r.meme_id], r.scales, r.presence) for r in train_split.records
        ]
        cec_config = CecTrainConfig(
            epochs=config.epochs,
            batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            seed=config.seed,
            fusion_dim=config.fusion_dim,
            hidden=config.hidden,
            cascade=config.variant == "full",
        )
        model, history = train_cec(labeled, cec_config)
        metric_fn = _task_bc_metrics
    metrics = {
        split.name: metric_fn(model, split, embeddings)
        for split in (train_split, valid_split, test_split)
    }
    report = RunReport(
        task=config.task,
        variant=config.variant,
        config=config.to_dict(),
        history=[h.terms() for h in history],
        metrics=metrics,
        thresholds=thresholds,
        wall_clock=time.perf_counter() - started,
    )
    return TrainedRun(config=config, report=report, model=model)


def ablate(
    base_config: RunConfig,
    records: Sequence,
    variants: Sequence[str] | None = None,
    seeds: Sequence[int] | None = None,
) -> list[TrainedRun]:
    """Run a grid of variants (and optionally seeds) on one dataset."""
    variants = tuple(
        variants or (VARIANTS_A if base_config.task == "A" else VARIANTS_BC)
    )
    seeds = tuple(seeds or (base_config.seed,))
    results = []
    for variant in variants:
        for seed in seeds:
            cfg = replace(base_config, variant=variant, seed=seed)
            results.append(run(cfg, records))
    return results


# --------------------------------------------------------------------------
# Checkpoint plumbing


def _net_arrays(prefix: str, net) -> dict:
    out = {}
    for name, param in net.named_parameters():
        out[f"{prefix}.{name}"] = param.detach().cpu().numpy().astype(np.float32)
    return out


def _config_meta(config: RunConfig) -> dict:
    return {
        "task": config.task,
        "variant": config.variant,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "learning_rate": float(config.learning_rate),
        "seed": int(config.seed),
        "hidden": config.hidden,
        "fusion_dim": config.fusion_dim,
        "bin_count": config.bin_count,
        "d_s": config.dims[0],
        "d_a": config.dims[1],
        "jitter": float(config.jitter),
        "ratios": ":".join(repr(r) for r in config.split_ratios),
        "k": config.perturbation.k,
        "noise_std": float(config.perturbation.noise_std),
        "rng_seed_i64": int(config.perturbation.rng_seed),
        "deterministic": int(config.deterministic),
    }


def save_run_checkpoint(trained: TrainedRun, path) -> None:
    config = trained.config
    meta = _config_meta(config)
    model = trained.model
    if config.task == "A":
        kind = ckpt.KIND_CTM
        if isinstance(model, SimpleClassifier):
            arrays = _net_arrays("classifier", model.linear)
        else:
            arrays = {}
            for prefix, net in (
                ("good_teacher", model.good_teacher),
                ("bad_teacher", model.bad_teacher),
                ("good_student", model.good_student),
                ("bad_student", model.bad_student),
                ("good_prior", model.good_prior),
                ("bad_prior", model.bad_prior),
            ):
                arrays.update(_net_arrays(prefix, net))
            meta["tau_good"] = np.float32(model.tau_good)
            meta["tau_bad"] = np.float32(model.tau_bad)
    else:
        kind = ckpt.KIND_CEC
        meta["cascade"] = int(model.cascade)
        arrays = _net_arrays("model", model)
    ckpt.save_checkpoint(path, kind, meta, arrays)


def _load_params(net, arrays: dict, prefix: str) -> None:
    with torch.no_grad():
        for name, param in net.named_parameters():
            key = f"{prefix}.{name}"
            if key not in arrays:
                raise CheckpointIntegrityError(f"missing parameter array {key!r}")
            arr = arrays[key]
            if arr.size != param.numel():
                raise CheckpointIntegrityError(
                    f"shape mismatch for {key!r}: {arr.shape} vs {tuple(param.shape)}"
                )
            if not np.all(np.isfinite(arr)):
                raise CheckpointIntegrityError(f"non-finite values in {key!r}")
            param.copy_(torch.from_numpy(arr.reshape(tuple(param.shape))))


def load_run_checkpoint(path) -> TrainedRun:
    """Rebuild a trained model (without report history) from a checkpoint."""
    kind, meta, arrays = ckpt.load_checkpoint(path)
    ratios = tuple(float(r) for r in str(meta["ratios"]).split(":"))
    config = RunConfig(
        task=str(meta["task"]),
        variant=str(meta["variant"]),
        epochs=int(meta["epochs"]),
        batch_size=int(meta["batch_size"]),
        learning_rate=float(meta["learning_rate"]),
        seed=int(meta["seed"]),
        hidden=int(meta["hidden"]),
        fusion_dim=int(meta["fusion_dim"]),
        bin_count=int(meta["bin_count"]),
        dims=(int(meta["d_s"]), int(meta["d_a"])),
        jitter=float(meta["jitter"]),
        split_ratios=ratios,
        perturbation=PerturbationConfig(
            k=int(meta["k"]),
            noise_std=float(meta["noise_std"]),
            rng_seed=int(meta["rng_seed_i64"]),
        ),
        deterministic=bool(meta["deterministic"]),
    )
    if config.task == "A":
        if kind != ckpt.KIND_CTM:
            raise CheckpointIntegrityError(
                "checkpoint type tag does not match a sentiment-task model"
            )
        if config.variant == "simple_classifier":
            d = config.dims[0] + 2 * config.dims[1]
            linear = nn.Linear(d, 3)
            _load_params(linear, arrays, "classifier")
            model = SimpleClassifier(linear, config.dims)
        else:
            model = new_ctm_state(
                config.dims,
                hidden=config.hidden,
                perturbation=config.perturbation,
                seed=config.seed,
                bin_count=config.bin_count,
            )
            for prefix, net in (
                ("good_teacher", model.good_teacher),
                ("bad_teacher", model.bad_teacher),
                ("good_student", model.good_student),
                ("bad_student", model.bad_student),
                ("good_prior", model.good_prior),
                ("bad_prior", model.bad_prior),
            ):
                _load_params(net, arrays, prefix)
            model = replace(
                model,
                tau_good=float(meta["tau_good"]),
                tau_bad=float(meta["tau_bad"]),
            )
    else:
        if kind != ckpt.KIND_CEC:
            raise CheckpointIntegrityError(
                "checkpoint type tag does not match an emotion-task model"
            )
        model = new_cec_model(
            config.dims,
            fusion_dim=config.fusion_dim,
            hidden=config.hidden,
            cascade=bool(int(meta["cascade"])),
            seed=config.seed,
        )
        _load_params(model, arrays, "model")
    report = RunReport(
        task=config.task,
        variant=config.variant,
        config=config.to_dict(),
        history=[],
        metrics={},
        thresholds=None,
        wall_clock=0.0,
    )
    return TrainedRun(config=config, report=report, model=model)


def evaluate_split(
    trained: TrainedRun,
    split: DatasetSplit,
    embeddings: Mapping[str, MultiModalEmbedding] | None = None,
) -> dict:
    config = trained.config
    embeddings = _prepare(split.records, config, embeddings)
    if config.task == "A":
        return _task_a_metrics(trained.model, split, embeddings)
    return _task_bc_metrics(trained.model, split, embeddings)
