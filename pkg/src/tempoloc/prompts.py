"""Timeline prompt sequences.

Builds the model-input layout in which audio-frame placeholders are
interleaved with timestamp tokens, so absolute time coordinates are readable
directly from the input sequence, e.g.::

    <s><audio><AUDIO><0.04><AUDIO><0.08>...</audio>QUESTION</s>

Timestamp tokens live on a two-decimal grid ("<0.04>", "<30.00>"); internally
times are handled as integer centiseconds so surfaces round-trip exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

DEFAULT_FRAME_RATE = 25.0
DEFAULT_STRIDE = 0.04
DEFAULT_MAX_TIME = 30.0

AUDIO_PLACEHOLDER = "<AUDIO>"


class DurationTooLongError(ValueError):
    """Requested clip duration exceeds the covered time range."""


class InvalidStrideError(ValueError):
    """Timestamp stride incompatible with the frame grid or the token grid."""


def _centiseconds(value: float, what: str) -> int:
    """Value as integer centiseconds; the timestamp grid is two-decimal."""
    cs = round(value * 100.0)
    if cs <= 0 or abs(value * 100.0 - cs) > 1e-6:
        raise InvalidStrideError(
            f"{what} must be a positive multiple of 0.01 s, got {value!r}"
        )
    return cs


@dataclass(frozen=True)
class TimestampToken:
    """A vocabulary token naming an absolute time, e.g. "<0.04>"."""

    surface: str
    time: float

    def __post_init__(self) -> None:
        if self.surface != f"<{self.time:.2f}>":
            raise ValueError(
                f"surface {self.surface!r} does not round-trip time {self.time!r} "
                "at two-decimal rendering"
            )

    @classmethod
    def at(cls, time: float) -> "TimestampToken":
        """Token for `time`, canonicalized to the two-decimal grid."""
        canonical = round(time, 2)
        return cls(surface=f"<{canonical:.2f}>", time=canonical)

    @property
    def numeric_string(self) -> str:
        """The time rendered without angle brackets, e.g. "0.04"."""
        return self.surface[1:-1]


@dataclass(frozen=True)
class TimestampVocab:
    """Ordered timestamp token set: token i names time (i + 1) * stride."""

    stride: float
    max_time: float
    tokens: tuple[TimestampToken, ...]

    @classmethod
    def build(
        cls, stride: float = DEFAULT_STRIDE, max_time: float = DEFAULT_MAX_TIME
    ) -> "TimestampVocab":
        stride_cs = _centiseconds(stride, "stride")
        max_cs = _centiseconds(max_time, "max_time")
        if max_cs % stride_cs != 0:
            raise InvalidStrideError(
                f"max_time {max_time!r} is not an integer number of strides {stride!r}"
            )
        count = max_cs // stride_cs
        tokens = tuple(
            TimestampToken.at((i + 1) * stride_cs / 100.0) for i in range(count)
        )
        return cls(stride=stride, max_time=max_time, tokens=tokens)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class AudioFrame:
    """Placeholder for one audio frame feature; never an actual feature."""

    index: int


@dataclass(frozen=True)
class Timestamp:
    token: TimestampToken


@dataclass(frozen=True)
class Text:
    token: str


SequenceItem = Union[AudioFrame, Timestamp, Text]


@dataclass(frozen=True)
class PromptSequence:
    """The ordered input layout for one clip."""

    items: tuple[SequenceItem, ...]
    frame_rate: float
    duration: float

    @property
    def n_frames(self) -> int:
        return sum(1 for item in self.items if isinstance(item, AudioFrame))

    @property
    def n_timestamps(self) -> int:
        return sum(1 for item in self.items if isinstance(item, Timestamp))

    def timestamp_times(self) -> list[float]:
        return [item.token.time for item in self.items if isinstance(item, Timestamp)]


def _frame_count(duration: float, frame_rate: float) -> int:
    # Ceiling with a guard against float noise in duration * frame_rate
    # (0.16 * 25 must give 4 frames, not 5).
    raw = duration * frame_rate
    nearest = round(raw)
    if abs(raw - nearest) < 1e-9:
        return max(1, int(nearest))
    return int(math.ceil(raw))


def build_time_prompt(
    duration: float,
    frame_rate: float = DEFAULT_FRAME_RATE,
    timestamp_stride: float = DEFAULT_STRIDE,
    max_time: float = DEFAULT_MAX_TIME,
) -> PromptSequence:
    """Interleave timestamp tokens among the clip's audio-frame placeholders.

    The clip is cut into ceil(duration * frame_rate) frames; after every frame
    whose end time is an exact multiple of `timestamp_stride`, the token for
    that time is inserted. A final partial frame (ceiling padding) still emits
    its grid timestamp.

    Raises DurationTooLongError when duration exceeds `max_time`, and
    InvalidStrideError when the stride is not a positive integer multiple of
    the frame period or not representable on the two-decimal token grid.
    """
    if not (math.isfinite(duration) and duration > 0.0):
        raise ValueError(f"duration must be positive, got {duration!r}")
    if duration > max_time + 1e-9:
        raise DurationTooLongError(
            f"duration {duration} s exceeds the covered range {max_time} s"
        )
    if frame_rate <= 0:
        raise ValueError(f"frame_rate must be positive, got {frame_rate!r}")

    frames_per_stride = timestamp_stride * frame_rate
    k = round(frames_per_stride)
    if k < 1 or abs(frames_per_stride - k) > 1e-9:
        raise InvalidStrideError(
            f"stride {timestamp_stride!r} is not a positive integer multiple of "
            f"the frame period {1.0 / frame_rate!r}"
        )
    stride_cs = _centiseconds(timestamp_stride, "timestamp_stride")

    items: list[SequenceItem] = []
    for i in range(_frame_count(duration, frame_rate)):
        items.append(AudioFrame(i))
        if (i + 1) % k == 0:
            m = (i + 1) // k
            items.append(Timestamp(TimestampToken.at(m * stride_cs / 100.0)))
    return PromptSequence(items=tuple(items), frame_rate=frame_rate, duration=duration)


def render_prompt(seq: PromptSequence, question: str) -> str:
    """Render a prompt sequence plus question to the literal input string."""
    parts = ["<s><audio>"]
    for item in seq.items:
        if isinstance(item, AudioFrame):
            parts.append(AUDIO_PLACEHOLDER)
        elif isinstance(item, Timestamp):
            parts.append(item.token.surface)
        else:
            parts.append(item.token)
    parts.append("</audio>")
    parts.append(question)
    parts.append("</s>")
    return "".join(parts)
