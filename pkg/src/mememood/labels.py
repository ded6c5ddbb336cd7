"""Label types shared by the sentiment and emotion models.

Sentiment is a 3-class label. The four emotions carry an ordinal
intensity scale (0..3 for humorous/sarcastic/offensive, 0..1 for
motivational) and a derived binary presence flag.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import InputError

EMOTIONS = ("humorous", "sarcastic", "offensive", "motivational")

# Number of intensity levels per emotion, in EMOTIONS order.
SCALE_CLASS_COUNTS = (4, 4, 4, 2)

SCALE_NAMES = ("not", "little", "very", "extremely")


class SentimentLabel(enum.Enum):
    NEGATIVE = "negative"
    NEUTRAL = "neutral"
    POSITIVE = "positive"


@dataclass(frozen=True)
class PreLabelPair:
    """Binary (good, bad) relabeling of the 3-class sentiment.

    Positive maps to (1, 0), negative to (0, 1) and neutral to (1, 1):
    a neutral meme counts toward both the positive and the negative
    side. (0, 0) never occurs.
    """

    good_label: int
    bad_label: int

    def __post_init__(self):
        if self.good_label not in (0, 1) or self.bad_label not in (0, 1):
            raise InputError("pre-label bits must be 0 or 1")
        if self.good_label == 0 and self.bad_label == 0:
            raise InputError("pre-label (0, 0) is not a valid pair")


def make_pre_label(sentiment: SentimentLabel) -> PreLabelPair:
    """Collapse the 3-class sentiment into the binary (good, bad) pair."""
    if sentiment is SentimentLabel.POSITIVE:
        return PreLabelPair(1, 0)
    if sentiment is SentimentLabel.NEGATIVE:
        return PreLabelPair(0, 1)
    return PreLabelPair(1, 1)


def sentiment_from_pre_label(pair: PreLabelPair) -> SentimentLabel:
    """Inverse of make_pre_label; total on the three valid pairs."""
    if pair.good_label and pair.bad_label:
        return SentimentLabel.NEUTRAL
    if pair.good_label:
        return SentimentLabel.POSITIVE
    return SentimentLabel.NEGATIVE


@dataclass(frozen=True)
class EmotionScaleVector:
    """Per-emotion intensity labels (0..3, motivational 0..1)."""

    humorous: int
    sarcastic: int
    offensive: int
    motivational: int

    def __post_init__(self):
        for name, count in zip(EMOTIONS, SCALE_CLASS_COUNTS):
            value = getattr(self, name)
            if not isinstance(value, int) or not 0 <= value < count:
                raise InputError(
                    f"{name} scale must be an integer in 0..{count - 1}, got {value!r}"
                )

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.humorous, self.sarcastic, self.offensive, self.motivational)


@dataclass(frozen=True)
class EmotionPresenceVector:
    """Binary presence flag per emotion."""

    humorous: int
    sarcastic: int
    offensive: int
    motivational: int

    def __post_init__(self):
        for name in EMOTIONS:
            if getattr(self, name) not in (0, 1):
                raise InputError(f"{name} presence must be 0 or 1")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.humorous, self.sarcastic, self.offensive, self.motivational)


def presence_from_scales(scales: EmotionScaleVector) -> EmotionPresenceVector:
    """An emotion is present exactly when its intensity is nonzero."""
    return EmotionPresenceVector(*(1 if s > 0 else 0 for s in scales.as_tuple()))


def parse_scale_value(raw, emotion: str) -> int:
    """Accept integer scales or the canonical intensity names.

    Motivational is binary, so only "not"/"extremely" (or 0/1) are valid
    names for it; the other emotions accept the full four-name ladder.
    """
    count = SCALE_CLASS_COUNTS[EMOTIONS.index(emotion)]
    if isinstance(raw, bool):
        raise InputError(f"{emotion} scale must not be a boolean")
    if isinstance(raw, int):
        value = raw
    elif isinstance(raw, str):
        name = raw.strip().lower()
        if name in SCALE_NAMES:
            value = SCALE_NAMES.index(name)
            if emotion == "motivational":
                if name == "extremely":
                    value = 1
                elif name != "not":
                    raise InputError(f"motivational scale {raw!r} is not binary")
        else:
            try:
                value = int(name)
            except ValueError:
                raise InputError(f"unrecognized {emotion} scale {raw!r}") from None
    else:
        raise InputError(f"unrecognized {emotion} scale {raw!r}")
    if not 0 <= value < count:
        raise InputError(f"{emotion} scale {value} outside 0..{count - 1}")
    return value
