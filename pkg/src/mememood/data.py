"""Dataset ingestion, validation, splitting and synthetic generation.

Manifests are UTF-8 JSON lines, one record per line, with fields
(id, image_path, caption, sentiment, sentiment_raw, humorous, sarcastic,
offensive, motivational, humorous_scale, sarcastic_scale, offensive_scale,
motivational_scale). Scale fields accept integers or the intensity names
("not"/"little"/"very"/"extremely", case-insensitive).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataValidationError, InputError, ManifestParseError
from .labels import (
    EMOTIONS,
    EmotionPresenceVector,
    EmotionScaleVector,
    SCALE_CLASS_COUNTS,
    SentimentLabel,
    parse_scale_value,
)

log = logging.getLogger(__name__)

MANIFEST_FIELDS = (
    "id",
    "image_path",
    "caption",
    "sentiment",
    "sentiment_raw",
    "humorous",
    "sarcastic",
    "offensive",
    "motivational",
    "humorous_scale",
    "sarcastic_scale",
    "offensive_scale",
    "motivational_scale",
)

# "very negative"/"very positive" sub-labels collapse onto the base class.
_SENTIMENT_ALIASES = {
    "negative": SentimentLabel.NEGATIVE,
    "very negative": SentimentLabel.NEGATIVE,
    "very_negative": SentimentLabel.NEGATIVE,
    "neutral": SentimentLabel.NEUTRAL,
    "positive": SentimentLabel.POSITIVE,
    "very positive": SentimentLabel.POSITIVE,
    "very_positive": SentimentLabel.POSITIVE,
}


@dataclass(frozen=True)
class MemeRecord:
    meme_id: str
    caption: str
    sentiment: SentimentLabel
    presence: EmotionPresenceVector
    scales: EmotionScaleVector
    image_path: str | None = None
    sentiment_raw: str | None = None


@dataclass
class DatasetSplit:
    name: str
    records: list[MemeRecord] = field(default_factory=list)

    def __post_init__(self):
        if self.name not in ("train", "valid", "test", "all"):
            raise InputError(f"unknown split name {self.name!r}")
        seen = set()
        for r in self.records:
            if r.meme_id in seen:
                raise DataValidationError(f"duplicate meme_id {r.meme_id!r}")
            seen.add(r.meme_id)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class LabelDistributionSpec:
    """Target label proportions for synthetic generation.

    ``sentiment`` is (negative, neutral, positive); ``scales`` maps each
    emotion to its per-level proportions (lengths 4, 4, 4, 2).
    """

    sentiment: tuple[float, float, float]
    scales: dict[str, tuple[float, ...]]

    def __post_init__(self):
        if abs(sum(self.sentiment) - 1.0) > 1e-9 or min(self.sentiment) < 0:
            raise InputError("sentiment proportions must be nonnegative and sum to 1")
        for emotion, count in zip(EMOTIONS, SCALE_CLASS_COUNTS):
            row = self.scales.get(emotion)
            if row is None or len(row) != count:
                raise InputError(f"{emotion} proportions must have length {count}")
            if abs(sum(row) - 1.0) > 1e-9 or min(row) < 0:
                raise InputError(f"{emotion} proportions must be nonnegative, sum 1")


# Label distributions of the three canonical corpus splits, used as
# bundled generation profiles.
BUNDLED_DISTRIBUTIONS = {
    "train": LabelDistributionSpec(
        sentiment=(0.25, 0.42, 0.33),
        scales={
            "humorous": (0.15, 0.48, 0.29, 0.08),
            "sarcastic": (0.21, 0.28, 0.43, 0.08),
            "offensive": (0.61, 0.27, 0.09, 0.03),
            "motivational": (0.88, 0.12),
        },
    ),
    "valid": LabelDistributionSpec(
        sentiment=(0.39, 0.38, 0.23),
        scales={
            "humorous": (0.07, 0.65, 0.25, 0.03),
            "sarcastic": (0.08, 0.65, 0.25, 0.02),
            "offensive": (0.43, 0.53, 0.03, 0.01),
            "motivational": (0.97, 0.03),
        },
    ),
    "test": LabelDistributionSpec(
        sentiment=(0.39, 0.36, 0.25),
        scales={
            "humorous": (0.07, 0.62, 0.27, 0.04),
            "sarcastic": (0.09, 0.62, 0.27, 0.02),
            "offensive": (0.45, 0.51, 0.03, 0.01),
            "motivational": (0.96, 0.04),
        },
    ),
}


def largest_remainder_counts(proportions, n: int) -> list[int]:
    """Exact integer allocation of n items to the given proportions.

    Floors the ideal counts, then hands remaining items to the largest
    fractional parts (ties to the lower index).
    """
    if n < 0:
        raise InputError("n must be nonnegative")
    ideal = [p * n for p in proportions]
    counts = [int(np.floor(x)) for x in ideal]
    remainder = n - sum(counts)
    order = sorted(range(len(ideal)), key=lambda i: (-(ideal[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def _aligned_column(proportions, n: int) -> list[int]:
    """Label column as contiguous runs: class 0 first, then class 1, ..."""
    column = []
    for value, count in enumerate(largest_remainder_counts(proportions, n)):
        column.extend([value] * count)
    return column


def generate_synthetic(
    spec: LabelDistributionSpec, n: int, seed: int, name: str = "all"
) -> DatasetSplit:
    """Generate n records whose label counts match the spec exactly.

    Each label column is allocated by largest remainder and laid out in
    aligned contiguous runs, then every full record is shuffled once.
    The aligned layout keeps the number of distinct label combinations
    small (roughly the number of run boundaries), which keeps synthetic
    datasets learnable at desk scale; the per-column marginals are exact
    either way. Presence labels are derived as scale > 0.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    sentiments = [
        (SentimentLabel.NEGATIVE, SentimentLabel.NEUTRAL, SentimentLabel.POSITIVE)[v]
        for v in _aligned_column(spec.sentiment, n)
    ]
    scale_columns = {
        emotion: _aligned_column(spec.scales[emotion], n) for emotion in EMOTIONS
    }
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    records = []
    id_width = max(6, len(str(n)))
    for new_idx, src in enumerate(order):
        scales = EmotionScaleVector(
            *(scale_columns[emotion][src] for emotion in EMOTIONS)
        )
        presence = EmotionPresenceVector(*(1 if s > 0 else 0 for s in scales.as_tuple()))
        meme_id = f"synth-{new_idx:0{id_width}d}"
        records.append(
            MemeRecord(
                meme_id=meme_id,
                caption=f"synthetic caption {meme_id}",
                sentiment=sentiments[src],
                presence=presence,
                scales=scales,
            )
        )
    return DatasetSplit(name, records)


def split_dataset(records, ratios, seed: int) -> tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
    """Disjoint seeded shuffle split into (train, valid, test).

    Sizes are floor-proportional to the ratios; leftover records go to
    train.
    """
    records = list(records)
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0:
        raise InputError("need three positive ratios")
    if len(records) < 3:
        raise InputError("need at least as many records as splits")
    total = sum(ratios)
    n = len(records)
    sizes = [int(np.floor(n * r / total)) for r in ratios]
    sizes[0] += n - sum(sizes)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    shuffled = [records[i] for i in order]
    train = shuffled[: sizes[0]]
    valid = shuffled[sizes[0] : sizes[0] + sizes[1]]
    test = shuffled[sizes[0] + sizes[1] :]
    return (
        DatasetSplit("train", train),
        DatasetSplit("valid", valid),
        DatasetSplit("test", test),
    )


# --------------------------------------------------------------------------
# Manifest I/O


def _record_to_json(record: MemeRecord) -> str:
    payload = {
        "id": record.meme_id,
        "image_path": record.image_path,
        "caption": record.caption,
        "sentiment": record.sentiment.value,
        "sentiment_raw": record.sentiment_raw,
        "humorous": record.presence.humorous,
        "sarcastic": record.presence.sarcastic,
        "offensive": record.presence.offensive,
        "motivational": record.presence.motivational,
        "humorous_scale": record.scales.humorous,
        "sarcastic_scale": record.scales.sarcastic,
        "offensive_scale": record.scales.offensive,
        "motivational_scale": record.scales.motivational,
    }
    return json.dumps(payload, ensure_ascii=False)


def save_manifest(split: DatasetSplit, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for record in split.records:
            fh.write(_record_to_json(record))
            fh.write("\n")


def _parse_record(obj: dict, line_number: int) -> MemeRecord:
    if not isinstance(obj, dict):
        raise ManifestParseError("record is not an object", line_number)
    try:
        meme_id = obj["id"]
        caption = obj.get("caption", "")
        sentiment_raw = obj.get("sentiment_raw")
        sentiment_text = str(obj["sentiment"]).strip().lower()
        sentiment = _SENTIMENT_ALIASES.get(sentiment_text)
        if sentiment is None:
            raise ManifestParseError(
                f"unknown sentiment {obj['sentiment']!r}", line_number
            )
        if sentiment_raw is None and sentiment_text not in (
            "negative",
            "neutral",
            "positive",
        ):
            sentiment_raw = sentiment_text
        presence_bits = []
        for emotion in EMOTIONS:
            bit = obj[emotion]
            if isinstance(bit, bool):
                bit = int(bit)
            if bit not in (0, 1):
                raise ManifestParseError(
                    f"{emotion} presence must be 0/1, got {obj[emotion]!r}", line_number
                )
            presence_bits.append(bit)
        scales = EmotionScaleVector(
            *(parse_scale_value(obj[f"{e}_scale"], e) for e in EMOTIONS)
        )
    except KeyError as exc:
        raise ManifestParseError(f"missing field {exc.args[0]!r}", line_number) from None
    except InputError as exc:
        raise ManifestParseError(str(exc), line_number) from None
    if not isinstance(meme_id, str) or not meme_id:
        raise ManifestParseError("id must be a nonempty string", line_number)
    return MemeRecord(
        meme_id=meme_id,
        caption=str(caption),
        sentiment=sentiment,
        presence=EmotionPresenceVector(*presence_bits),
        scales=scales,
        image_path=obj.get("image_path"),
        sentiment_raw=sentiment_raw,
    )


def load_manifest(path, name: str = "all") -> DatasetSplit:
    """Load and validate a JSONL manifest.

    Presence/scale disagreements (presence claimed with scale 0, or the
    reverse) are kept as-is; one summary warning reports the count.
    """
    path = Path(path)
    records = []
    seen: set[str] = set()
    inconsistent = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestParseError(f"invalid JSON: {exc.msg}", line_number) from None
            record = _parse_record(obj, line_number)
            if record.meme_id in seen:
                raise DataValidationError(
                    f"duplicate meme_id {record.meme_id!r} at line {line_number}"
                )
            seen.add(record.meme_id)
            for bit, scale in zip(record.presence.as_tuple(), record.scales.as_tuple()):
                if bit != (1 if scale > 0 else 0):
                    inconsistent += 1
                    break
            records.append(record)
    if inconsistent:
        log.warning(
            "%d of %d records have presence labels inconsistent with scales",
            inconsistent,
            len(records),
        )
    return DatasetSplit(name, records)
