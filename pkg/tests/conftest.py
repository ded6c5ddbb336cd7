"""Shared fixtures: the 700-record synthetic benchmark and trained models.

Session-scoped so the acceptance suite and module tests share one
training run per model instead of retraining.
"""

import time

import pytest

from mememood.ctm import PerturbationConfig
from mememood.data import BUNDLED_DISTRIBUTIONS, generate_synthetic
from mememood.runs import RunConfig, run

BENCH_SEED = 1
BENCH_DIMS = (16, 8)
BENCH_JITTER = 0.05


@pytest.fixture(scope="session")
def bench_records():
    """700 records with the bundled train-split label proportions."""
    return generate_synthetic(BUNDLED_DISTRIBUTIONS["train"], 700, seed=BENCH_SEED).records


@pytest.fixture(scope="session")
def ctm_bench(bench_records):
    """Full sentiment model trained on the benchmark (timed)."""
    config = RunConfig(
        task="A",
        variant="full",
        epochs=40,
        batch_size=32,
        learning_rate=0.2,
        seed=BENCH_SEED,
        hidden=64,
        dims=BENCH_DIMS,
        jitter=BENCH_JITTER,
        perturbation=PerturbationConfig(k=16, noise_std=0.01, rng_seed=BENCH_SEED),
    )
    started = time.perf_counter()
    trained = run(config, bench_records)
    return {"trained": trained, "seconds": time.perf_counter() - started}


@pytest.fixture(scope="session")
def cec_bench(bench_records):
    """Cascaded emotion classifier trained on the benchmark (timed)."""
    config = RunConfig(
        task="B_C",
        variant="full",
        epochs=30,
        batch_size=32,
        learning_rate=0.05,
        seed=BENCH_SEED,
        hidden=64,
        fusion_dim=64,
        dims=BENCH_DIMS,
        jitter=BENCH_JITTER,
    )
    started = time.perf_counter()
    trained = run(config, bench_records)
    return {"trained": trained, "seconds": time.perf_counter() - started}


ABLATION_VARIANTS = ("full", "no_teacher", "fixed_threshold", "no_teacher_no_threshold")
ABLATION_SEEDS = (0, 1, 2, 3, 4)


@pytest.fixture(scope="session")
def ablation_scores(bench_records):
    """Valid-split weighted F1 per sentiment variant per seed, plus one
    simple-classifier run (to confirm it completes)."""
    scores = {variant: {} for variant in ABLATION_VARIANTS}
    for variant in ABLATION_VARIANTS:
        for seed in ABLATION_SEEDS:
            config = RunConfig(
                task="A",
                variant=variant,
                epochs=20,
                batch_size=32,
                learning_rate=0.2,
                seed=seed,
                hidden=64,
                dims=BENCH_DIMS,
                jitter=BENCH_JITTER,
                perturbation=PerturbationConfig(k=16, noise_std=0.01, rng_seed=seed),
            )
            trained = run(config, bench_records)
            scores[variant][seed] = trained.report.metrics["valid"]["weighted_f1"]
    simple_config = RunConfig(
        task="A",
        variant="simple_classifier",
        epochs=20,
        batch_size=32,
        learning_rate=0.2,
        seed=0,
        dims=BENCH_DIMS,
        jitter=BENCH_JITTER,
    )
    simple = run(simple_config, bench_records)
    scores["simple_classifier"] = {0: simple.report.metrics["valid"]["weighted_f1"]}
    return scores
