"""Weighted F1 and per-task evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .labels import EMOTIONS


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix; rows are gold classes, columns predictions."""

    classes: tuple
    counts: np.ndarray

    def __post_init__(self):
        k = len(self.classes)
        if self.counts.shape != (k, k):
            raise InputError("confusion counts must be square over the class set")
        if np.any(self.counts < 0):
            raise InputError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(preds, golds) -> ConfusionMatrix:
    preds = list(preds)
    golds = list(golds)
    if len(preds) != len(golds):
        raise InputError(f"length mismatch: {len(preds)} preds vs {len(golds)} golds")
    if not golds:
        raise InputError("need at least one sample")
    classes = tuple(sorted(set(golds) | set(preds)))
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, g in zip(preds, golds):
        counts[index[g], index[p]] += 1
    return ConfusionMatrix(classes, counts)


def per_class_f1(cm: ConfusionMatrix) -> dict:
    """Per-class F1 with the zero convention (precision+recall=0 -> 0)."""
    scores = {}
    for i, cls in enumerate(cm.classes):
        tp = float(cm.counts[i, i])
        fp = float(cm.counts[:, i].sum() - tp)
        fn = float(cm.counts[i, :].sum() - tp)
        denom = 2 * tp + fp + fn
        scores[cls] = (2 * tp / denom) if denom > 0 else 0.0
    return scores


def weighted_f1(preds, golds) -> float:
    """Support-weighted mean of per-class F1 over the gold labels."""
    cm = confusion_matrix(preds, golds)
    f1 = per_class_f1(cm)
    support = {cls: float(cm.counts[i, :].sum()) for i, cls in enumerate(cm.classes)}
    total = sum(support.values())
    return sum(f1[cls] * support[cls] for cls in cm.classes) / total


@dataclass(frozen=True)
class TaskScores:
    """Per-emotion weighted F1 plus their unweighted mean.

    The aggregate is a plain mean across the four emotions; reports flag
    this convention explicitly.
    """

    per_emotion: dict
    aggregate: float


def _per_emotion_scores(pred_rows, gold_rows) -> TaskScores:
    pred_rows = [tuple(r) for r in pred_rows]
    gold_rows = [tuple(r) for r in gold_rows]
    if len(pred_rows) != len(gold_rows):
        raise InputError("prediction/gold row counts differ")
    if not gold_rows:
        raise InputError("need at least one sample")
    scores = {}
    for j, emotion in enumerate(EMOTIONS):
        scores[emotion] = weighted_f1(
            [row[j] for row in pred_rows], [row[j] for row in gold_rows]
        )
    aggregate = sum(scores.values()) / len(EMOTIONS)
    return TaskScores(scores, aggregate)


def task_b_f1(pred_presence, gold_presence) -> TaskScores:
    """Weighted F1 per emotion over binary presence labels."""
    return _per_emotion_scores(pred_presence, gold_presence)


def task_c_f1(pred_scales, gold_scales) -> TaskScores:
    """Weighted F1 per emotion over intensity labels."""
    return _per_emotion_scores(pred_scales, gold_scales)


def render_score_table(rows, title: str = "results") -> str:
    """Plain-text table with (task, variant, weighted F1) rows."""
    rows = list(rows)
    task_w = max([len("task")] + [len(str(r[0])) for r in rows])
    var_w = max([len("variant")] + [len(str(r[1])) for r in rows])
    header = f"{'task':<{task_w}} {'variant':<{var_w}} {'weighted F1':>12}"
    lines = [title, "-" * len(header), header, "-" * len(header)]
    for task, variant, score in rows:
        lines.append(f"{task:<{task_w}} {variant:<{var_w}} {score:>12.4f}")
    lines.append("-" * len(header))
    lines.append("task B/C aggregates are unweighted means over the four emotions")
    return "\n".join(lines)
