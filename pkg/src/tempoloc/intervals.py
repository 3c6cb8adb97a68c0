"""Temporal domain types and interval arithmetic.

All times are absolute seconds on a clip timeline, stored as 64-bit floats.
Every type here is an immutable value; every operation is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class TaskKind(Enum):
    """The three timestamped-output task families."""

    AUDIO_GROUNDING = "ag"
    SOUND_EVENT_DETECTION = "sed"
    DENSE_AUDIO_CAPTIONING = "dac"


def normalize_label(label: str) -> str:
    """Trim, collapse internal whitespace, and case-fold a label."""
    return " ".join(label.split()).casefold()


@dataclass(frozen=True)
class TimeInterval:
    """An [onset, offset] pair in seconds.

    Zero-length intervals (onset == offset) are valid: an instantaneous event.
    """

    onset: float
    offset: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.onset) and math.isfinite(self.offset)):
            raise ValueError(
                f"interval bounds must be finite, got [{self.onset}, {self.offset}]"
            )
        if self.onset < 0.0 or self.offset < 0.0:
            raise ValueError(
                f"interval bounds must be >= 0, got [{self.onset}, {self.offset}]"
            )
        if self.onset > self.offset:
            raise ValueError(f"onset {self.onset} exceeds offset {self.offset}")

    @property
    def length(self) -> float:
        return self.offset - self.onset


@dataclass(frozen=True)
class Event:
    """A labeled interval.

    The label is an event class name, a natural-language query, or a caption,
    depending on the task.
    """

    label: str
    interval: TimeInterval

    def __post_init__(self) -> None:
        if not normalize_label(self.label):
            raise ValueError("event label is empty after whitespace normalization")


@dataclass(frozen=True)
class EventList:
    """The events of one clip, with the clip identity and duration."""

    clip_id: str
    duration: float
    events: tuple[Event, ...] = ()

    def __post_init__(self) -> None:
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise ValueError(f"clip duration must be positive, got {self.duration}")
        object.__setattr__(self, "events", tuple(self.events))
        for event in self.events:
            if event.interval.offset > self.duration + 1e-9:
                raise ValueError(
                    f"event {event.label!r} ends at {event.interval.offset} s, "
                    f"beyond the clip duration {self.duration} s"
                )

    def __len__(self) -> int:
        return len(self.events)


def intersect(a: TimeInterval, b: TimeInterval) -> float:
    """Overlap length of two intervals in seconds (0 when disjoint)."""
    return max(0.0, min(a.offset, b.offset) - max(a.onset, b.onset))


def union_length(a: TimeInterval, b: TimeInterval) -> float:
    """Combined covered length of two intervals in seconds."""
    return a.length + b.length - intersect(a, b)
