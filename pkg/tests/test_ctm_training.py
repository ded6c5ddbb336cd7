"""Sentiment-model training loop: determinism, null updates, divergence."""

import math

import pytest
import torch

import mememood.ctm as ctm_module
from mememood.ctm import (
    CtmBatchResult,
    CtmTrainConfig,
    LossBreakdown,
    PerturbationConfig,
    new_ctm_state,
    train_ctm,
)
from mememood.data import BUNDLED_DISTRIBUTIONS, generate_synthetic
from mememood.embeddings import encode_split
from mememood.errors import InputError, TrainingDivergenceError

DIMS = (8, 4)


def labeled_data(n=60, seed=0):
    records = generate_synthetic(BUNDLED_DISTRIBUTIONS["train"], n, seed=seed).records
    embeddings = encode_split(records, seed, DIMS, 0.05)
    return [(embeddings[r.meme_id], r.sentiment) for r in records]


def tiny_config(**overrides):
    defaults = dict(
        epochs=2,
        batch_size=16,
        learning_rate=0.1,
        seed=3,
        hidden=8,
        perturbation=PerturbationConfig(k=4, noise_std=0.01, rng_seed=3),
    )
    defaults.update(overrides)
    return CtmTrainConfig(**defaults)


def state_params(state):
    return [p.detach().clone() for p in state.parameters()]


class TestTrainCtm:
    def test_zero_learning_rate_leaves_parameters_unchanged(self):
        data = labeled_data()
        config = tiny_config(epochs=1, learning_rate=0.0)
        state, _ = train_ctm(data, config)
        fresh = new_ctm_state(
            DIMS, hidden=config.hidden, perturbation=config.perturbation, seed=config.seed
        )
        for p1, p2 in zip(state.parameters(), fresh.parameters()):
            assert torch.equal(p1, p2)

    def test_history_length_equals_epochs(self):
        state, history = train_ctm(labeled_data(), tiny_config(epochs=3))
        assert len(history) == 3
        assert all(isinstance(h, LossBreakdown) for h in history)

    def test_bit_identical_across_runs(self):
        """Same seed and config twice: parameters and thresholds agree
        to the last bit (single-threaded mode)."""
        torch.set_num_threads(1)
        data = labeled_data()
        config = tiny_config(epochs=2)
        s1, h1 = train_ctm(data, config)
        s2, h2 = train_ctm(data, config)
        assert s1.tau_good == s2.tau_good
        assert s1.tau_bad == s2.tau_bad
        for p1, p2 in zip(s1.parameters(), s2.parameters()):
            assert torch.equal(p1, p2)
        assert [h.terms() for h in h1] == [h.terms() for h in h2]

    def test_loss_total_non_increasing_over_first_five_epochs(self):
        """Seeded 300-meme separable benchmark at a small learning rate."""
        records = generate_synthetic(BUNDLED_DISTRIBUTIONS["train"], 300, seed=7).records
        embeddings = encode_split(records, 7, DIMS, 0.05)
        data = [(embeddings[r.meme_id], r.sentiment) for r in records]
        config = tiny_config(epochs=5, learning_rate=0.01, seed=7,
                             perturbation=PerturbationConfig(k=4, noise_std=0.01, rng_seed=7))
        _, history = train_ctm(data, config)
        totals = [h.total for h in history]
        assert all(a >= b for a, b in zip(totals, totals[1:])), totals

    def test_thresholds_recorded_from_final_epoch(self):
        state, _ = train_ctm(labeled_data(), tiny_config())
        assert 0.0 <= state.tau_good <= 1.0
        assert 0.0 <= state.tau_bad <= 1.0

    def test_empty_dataset_rejected(self):
        with pytest.raises(InputError):
            train_ctm([], tiny_config())

    def test_divergence_raises_with_epoch_and_term(self, monkeypatch):
        real = ctm_module.ctm_batch_loss

        def poisoned(batch, state, noise_rng=None):
            result = real(batch, state, noise_rng=noise_rng)
            broken = LossBreakdown(math.nan, result.breakdown.l_dst,
                                   result.breakdown.l_s, result.breakdown.l_cfd, math.nan)
            return CtmBatchResult(
                total=result.total,
                breakdown=broken,
                disturbed_good=result.disturbed_good,
                disturbed_bad=result.disturbed_bad,
            )

        monkeypatch.setattr(ctm_module, "ctm_batch_loss", poisoned)
        with pytest.raises(TrainingDivergenceError) as err:
            train_ctm(labeled_data(), tiny_config())
        assert err.value.epoch == 0
        assert err.value.term == "l_t"
