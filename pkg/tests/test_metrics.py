"""Metric checks against an independent confusion-matrix oracle."""

import numpy as np
import pytest

from mememood.errors import InputError
from mememood.metrics import (
    ConfusionMatrix,
    confusion_matrix,
    render_score_table,
    task_b_f1,
    task_c_f1,
    weighted_f1,
)


def oracle_weighted_f1(preds, golds):
    """Direct confusion-matrix computation, kept independent of the
    implementation's code path."""
    classes = sorted(set(golds) | set(preds))
    total = len(golds)
    score = 0.0
    for cls in classes:
        tp = sum(1 for p, g in zip(preds, golds) if p == cls and g == cls)
        fp = sum(1 for p, g in zip(preds, golds) if p == cls and g != cls)
        fn = sum(1 for p, g in zip(preds, golds) if p != cls and g == cls)
        support = tp + fn
        f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
        score += f1 * support / total
    return score


class TestWeightedF1:
    def test_hand_verified_example(self):
        """golds AABB vs preds ABBB: per-class F1 2/3 and 4/5, weighted 11/15."""
        value = weighted_f1(["A", "B", "B", "B"], ["A", "A", "B", "B"])
        assert abs(value - 11 / 15) < 1e-12

    def test_perfect_predictions(self):
        golds = ["x", "y", "z", "x"]
        assert weighted_f1(golds, golds) == 1.0

    def test_single_class_all_correct(self):
        assert weighted_f1(["a"] * 5, ["a"] * 5) == 1.0

    def test_matches_oracle_on_random_inputs(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = int(rng.integers(1, 40))
            k = int(rng.integers(1, 6))
            golds = [int(v) for v in rng.integers(0, k, size=n)]
            preds = [int(v) for v in rng.integers(0, k, size=n)]
            np.testing.assert_allclose(
                weighted_f1(preds, golds), oracle_weighted_f1(preds, golds), atol=1e-12
            )

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        golds = [int(v) for v in rng.integers(0, 4, size=60)]
        preds = [int(v) for v in rng.integers(0, 4, size=60)]
        base = weighted_f1(preds, golds)
        for _ in range(20):
            order = rng.permutation(60)
            assert weighted_f1([preds[i] for i in order], [golds[i] for i in order]) == base

    def test_relabel_invariance(self):
        rng = np.random.default_rng(11)
        golds = [int(v) for v in rng.integers(0, 4, size=50)]
        preds = [int(v) for v in rng.integers(0, 4, size=50)]
        base = weighted_f1(preds, golds)
        mapping = {0: "d", 1: "c", 2: "b", 3: "a"}
        assert weighted_f1([mapping[p] for p in preds], [mapping[g] for g in golds]) == base

    def test_range_and_perfect_iff_equal(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(1, 30))
            golds = [int(v) for v in rng.integers(0, 3, size=n)]
            preds = [int(v) for v in rng.integers(0, 3, size=n)]
            value = weighted_f1(preds, golds)
            assert 0.0 <= value <= 1.0
            if preds == golds:
                assert value == 1.0
            else:
                assert value < 1.0

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            weighted_f1(["a"], ["a", "b"])

    def test_empty_inputs(self):
        with pytest.raises(InputError):
            weighted_f1([], [])


class TestConfusionMatrix:
    def test_total_matches_sample_count(self):
        cm = confusion_matrix(["a", "b", "a"], ["a", "a", "b"])
        assert cm.total == 3

    def test_rejects_negative_counts(self):
        with pytest.raises(InputError):
            ConfusionMatrix(("a", "b"), np.array([[1, -1], [0, 2]]))


class TestTaskScores:
    def test_perfect_predictions(self):
        rows = [(1, 0, 1, 0), (0, 1, 1, 1)]
        scores = task_b_f1(rows, rows)
        assert scores.aggregate == 1.0
        assert all(v == 1.0 for v in scores.per_emotion.values())

    def test_chance_predictions_between_zero_and_perfect(self):
        rng = np.random.default_rng(5)
        golds = [tuple(int(v) for v in rng.integers(0, 2, size=4)) for _ in range(200)]
        preds = [tuple(int(v) for v in rng.integers(0, 2, size=4)) for _ in range(200)]
        scores = task_b_f1(preds, golds)
        assert 0.0 < scores.aggregate < 1.0

    def test_composition_matches_per_emotion_oracle(self):
        rng = np.random.default_rng(99)
        golds = [
            tuple(int(v) for v in (rng.integers(0, 4), rng.integers(0, 4),
                                   rng.integers(0, 4), rng.integers(0, 2)))
            for _ in range(120)
        ]
        preds = [
            tuple(int(v) for v in (rng.integers(0, 4), rng.integers(0, 4),
                                   rng.integers(0, 4), rng.integers(0, 2)))
            for _ in range(120)
        ]
        scores = task_c_f1(preds, golds)
        expected = []
        for j in range(4):
            expected.append(
                oracle_weighted_f1([p[j] for p in preds], [g[j] for g in golds])
            )
        for j, emotion in enumerate(("humorous", "sarcastic", "offensive", "motivational")):
            np.testing.assert_allclose(scores.per_emotion[emotion], expected[j], atol=1e-12)
        np.testing.assert_allclose(scores.aggregate, sum(expected) / 4, atol=1e-12)

    def test_row_count_mismatch(self):
        with pytest.raises(InputError):
            task_b_f1([(1, 0, 0, 0)], [])


def test_render_score_table_mentions_aggregate_convention():
    table = render_score_table([("task A", "full", 0.5)])
    assert "unweighted means" in table
    assert "0.5000" in table
