"""Command-line interface.

Commands: synth-data, train, evaluate, ablate, predict, encode-cache.
Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 training divergence. Results go to stdout or files; diagnostics to
stderr. All randomness in a command flows from its --seed flag.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .cache import EmbeddingCache
from .cec import infer_cec
from .ctm import infer_sentiment, student_scores
from .data import (
    BUNDLED_DISTRIBUTIONS,
    DatasetSplit,
    LabelDistributionSpec,
    generate_synthetic,
    load_manifest,
    save_manifest,
    split_dataset,
)
from .embeddings import SyntheticBackend, encode_meme, encode_split
from .errors import (
    CacheIntegrityError,
    CheckpointIntegrityError,
    ConfigurationError,
    DataValidationError,
    InputError,
    MememoodError,
    TrainingDivergenceError,
)
from .metrics import render_score_table
from .runs import (
    RunConfig,
    SimpleClassifier,
    ablate,
    evaluate_split,
    load_run_checkpoint,
    run,
    save_run_checkpoint,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

DATA_DIR_ENV = "MEMEMOOD_DATA_DIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _data_path(value: str) -> Path:
    path = Path(value)
    base = os.environ.get(DATA_DIR_ENV)
    if base and not path.is_absolute() and not path.exists():
        candidate = Path(base) / path
        if candidate.exists():
            return candidate
    return path


def _parse_dims(value: str) -> tuple[int, int]:
    try:
        d_s, d_a = (int(p) for p in value.lower().split("x"))
    except ValueError:
        raise InputError(f"dims must look like 16x8, got {value!r}") from None
    return d_s, d_a


def _load_distribution(name: str) -> LabelDistributionSpec:
    if name in BUNDLED_DISTRIBUTIONS:
        return BUNDLED_DISTRIBUTIONS[name]
    path = _data_path(name)
    if not path.exists():
        raise InputError(
            f"--spec must be one of {sorted(BUNDLED_DISTRIBUTIONS)} or a JSON file"
        )
    payload = json.loads(path.read_text())
    return LabelDistributionSpec(
        sentiment=tuple(payload["sentiment"]),
        scales={k: tuple(v) for k, v in payload["scales"].items()},
    )


def _build_config(args, task: str | None = None) -> RunConfig:
    base: dict = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text())
    overrides = {
        "task": task,
        "variant": getattr(args, "variant", None),
        "epochs": getattr(args, "epochs", None),
        "batch_size": getattr(args, "batch_size", None),
        "learning_rate": getattr(args, "learning_rate", None),
        "seed": getattr(args, "seed", None),
        "hidden": getattr(args, "hidden", None),
        "fusion_dim": getattr(args, "fusion_dim", None),
        "jitter": getattr(args, "jitter", None),
    }
    if getattr(args, "dims", None):
        overrides["dims"] = _parse_dims(args.dims)
    for key, value in overrides.items():
        if value is not None:
            base[key] = value
    perturbation = dict(base.get("perturbation", {}))
    if getattr(args, "k", None) is not None:
        perturbation["k"] = args.k
    if getattr(args, "noise_std", None) is not None:
        perturbation["noise_std"] = args.noise_std
    perturbation.setdefault("k", 32)
    perturbation.setdefault("noise_std", 0.01)
    perturbation.setdefault("rng_seed", base.get("seed", 0))
    base["perturbation"] = perturbation
    return RunConfig.from_dict(base)


def _embeddings_for(records, config: RunConfig, cache_path: str | None):
    if cache_path:
        path = _data_path(cache_path)
        if path.exists():
            cache = EmbeddingCache.load(path)
            found = {r.meme_id: cache.get(r.meme_id) for r in records}
            if all(v is not None for v in found.values()):
                return found
            print(f"cache at {path} incomplete; re-encoding", file=sys.stderr)
        embeddings = encode_split(records, config.seed, config.dims, config.jitter)
        cache = EmbeddingCache()
        for meme_id, emb in embeddings.items():
            cache.put(meme_id, emb)
        cache.save(path)
        return embeddings
    return encode_split(records, config.seed, config.dims, config.jitter)


def _print_metrics(task: str, metrics: dict) -> None:
    for split_name in ("train", "valid", "test"):
        entry = metrics.get(split_name)
        if not entry:
            continue
        if task == "A":
            print(f"task A {split_name} weighted F1: {entry['weighted_f1']:.4f}")
        else:
            print(
                f"task B {split_name} weighted F1: {entry['task_b']['aggregate']:.4f}  "
                f"task C {split_name} weighted F1: {entry['task_c']['aggregate']:.4f}"
            )


# --------------------------------------------------------------------------
# Subcommands


def _cmd_synth_data(args) -> int:
    spec = _load_distribution(args.spec)
    split = generate_synthetic(spec, args.n, args.seed)
    save_manifest(split, args.out)
    print(f"wrote {args.n} records to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_train(args) -> int:
    config = _build_config(args, task=args.task)
    records = load_manifest(_data_path(args.data)).records
    embeddings = _embeddings_for(records, config, args.cache)
    trained = run(config, records, embeddings)
    if args.out:
        save_run_checkpoint(trained, args.out)
        print(f"checkpoint written to {args.out}", file=sys.stderr)
    if args.report:
        Path(args.report).write_text(trained.report.to_json() + "\n")
        print(f"report written to {args.report}", file=sys.stderr)
    _print_metrics(config.task, trained.report.metrics)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    trained = load_run_checkpoint(_data_path(args.checkpoint))
    if args.task and args.task != trained.config.task:
        raise ConfigurationError(
            f"checkpoint is for task {trained.config.task}, not {args.task}"
        )
    records = load_manifest(_data_path(args.data)).records
    config = trained.config
    embeddings = _embeddings_for(records, config, args.cache)
    if args.split == "all":
        splits = [("all", records)]
    else:
        train_s, valid_s, test_s = split_dataset(
            records, config.split_ratios, config.seed
        )
        by_name = {"train": train_s, "valid": valid_s, "test": test_s}
        splits = [(args.split, by_name[args.split].records)]
    for name, split_records in splits:
        if not split_records:
            raise InputError(f"the {name!r} split of this dataset is empty")
        metrics = evaluate_split(
            trained, DatasetSplit("all", list(split_records)), embeddings
        )
        if config.task == "A":
            print(f"task A {name} weighted F1: {metrics['weighted_f1']:.4f}")
        else:
            print(
                f"task B {name} weighted F1: {metrics['task_b']['aggregate']:.4f}  "
                f"task C {name} weighted F1: {metrics['task_c']['aggregate']:.4f}"
            )
    return EXIT_OK


def _cmd_ablate(args) -> int:
    config = _build_config(args, task=args.task)
    records = load_manifest(_data_path(args.data)).records
    _, valid_probe, _ = split_dataset(records, config.split_ratios, config.seed)
    if not valid_probe.records:
        raise InputError("dataset too small: its validation split is empty")
    variants = args.variants.split(",") if args.variants else None
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    results = ablate(config, records, variants=variants, seeds=seeds)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for trained in results:
        report = trained.report
        seed = trained.config.seed
        stem = f"{report.task}_{report.variant}_seed{seed}"
        (out_dir / f"{stem}.json").write_text(report.to_json() + "\n")
        if report.task == "A":
            score = report.metrics["valid"]["weighted_f1"]
            rows.append((f"task {report.task}", f"{report.variant} (seed {seed})", score))
        else:
            rows.append(
                (
                    "task B",
                    f"{report.variant} (seed {seed})",
                    report.metrics["valid"]["task_b"]["aggregate"],
                )
            )
            rows.append(
                (
                    "task C",
                    f"{report.variant} (seed {seed})",
                    report.metrics["valid"]["task_c"]["aggregate"],
                )
            )
    table = render_score_table(rows, title="ablation results (valid split)")
    (out_dir / "ablation_table.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def _cmd_predict(args) -> int:
    trained = load_run_checkpoint(_data_path(args.checkpoint))
    config = trained.config
    if args.task and args.task != config.task:
        raise ConfigurationError(
            f"checkpoint is for task {config.task}, not {args.task}"
        )
    backend = SyntheticBackend(config.seed, config.dims)
    emb = encode_meme(args.image, args.caption, backend)
    if config.task == "A":
        if isinstance(trained.model, SimpleClassifier):
            label = trained.model.predict([emb])[0]
        else:
            scores = student_scores(trained.model, [emb])[0]
            label = infer_sentiment(
                float(min(max(scores[0], 0.0), 1.0)),
                float(min(max(scores[1], 0.0), 1.0)),
                trained.model.tau_good,
                trained.model.tau_bad,
            )
        print(label.value)
    else:
        scales, presence = infer_cec(emb, trained.model)
        bits = " ".join(str(v) for v in presence.as_tuple())
        levels = " ".join(str(v) for v in scales.as_tuple())
        print(f"{bits} {levels}")
    return EXIT_OK


def _cmd_encode_cache(args) -> int:
    records = load_manifest(_data_path(args.data)).records
    dims = _parse_dims(args.dims)
    embeddings = encode_split(records, args.seed, dims, args.jitter)
    cache = EmbeddingCache()
    for meme_id, emb in embeddings.items():
        cache.put(meme_id, emb)
    cache.save(args.out)
    print(f"cached {len(cache)} embeddings to {args.out}", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------


def _add_train_flags(p: _Parser) -> None:
    p.add_argument("--config", help="JSON config file (flat RunConfig keys)")
    p.add_argument("--variant")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--fusion-dim", dest="fusion_dim", type=int)
    p.add_argument("--dims", help="embedding dims as DSxDA, e.g. 16x8")
    p.add_argument("--jitter", type=float)
    p.add_argument("--k", type=int, help="perturbations per meme")
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--cache", help="embedding cache file to reuse or create")


def build_parser() -> _Parser:
    parser = _Parser(prog="mememood", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic labeled manifest")
    p.add_argument("--spec", required=True, help="train|valid|test or a JSON file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth_data)

    p = sub.add_parser("train", help="train one model variant")
    p.add_argument("--task", required=True, choices=["A", "B_C"])
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--report", help="report JSON path")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a manifest")
    p.add_argument("--task", choices=["A", "B_C"])
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["all", "train", "valid", "test"], default="all")
    p.add_argument("--cache")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="run the variant grid")
    p.add_argument("--task", required=True, choices=["A", "B_C"])
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--variants", help="comma list; defaults to all for the task")
    p.add_argument("--seeds", help="comma list of seeds")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("predict", help="predict one meme from a checkpoint")
    p.add_argument("--task", choices=["A", "B_C"])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", help="image reference (path or id)")
    p.add_argument("--caption", default="")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("encode-cache", help="build an embedding cache for a manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", default="16x8")
    p.add_argument("--jitter", type=float, default=0.05)
    p.set_defaults(func=_cmd_encode_cache)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except TrainingDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (
        DataValidationError,
        CacheIntegrityError,
        CheckpointIntegrityError,
        InputError,
        ConfigurationError,
        FileNotFoundError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MememoodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
