"""Parsers for the three timestamped output grammars.

Grounding and detection outputs are JSON-style objects mapping a label to an
[onset, offset] pair; captioning outputs are "onset-offset, description"
lines. Parsing is strict by design: in a reward loop a malformed generation
must score zero, not be silently repaired. Parsers therefore never raise on
arbitrary input; they return a ParseError value describing the first defect
(character offset for the object grammars, line number for the line grammar).

A `lenient` flag enables swapped-bounds repair for offline analysis only.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Union

from .intervals import Event, TaskKind, TimeInterval, normalize_label


class ParseErrorKind(Enum):
    BAD_SYNTAX = "BadSyntax"
    BAD_TIMESTAMP = "BadTimestamp"
    EMPTY_OUTPUT = "EmptyOutput"
    SWAPPED_BOUNDS = "SwappedBounds"


@dataclass(frozen=True)
class ParseError:
    """First defect found in a model output.

    `position` is a character offset for parse_ag/parse_sed and a 1-based
    line number for parse_dac.
    """

    kind: ParseErrorKind
    position: int
    detail: str


@dataclass(frozen=True)
class ParsedOutput:
    task: TaskKind
    events: tuple[Event, ...]
    warnings: tuple[str, ...] = ()


ParseResult = Union[ParsedOutput, ParseError]


class _Fail(Exception):
    def __init__(self, kind: ParseErrorKind, position: int, detail: str):
        super().__init__(detail)
        self.kind = kind
        self.position = position
        self.detail = detail


_ESCAPES = {'"': '"', "\\": "\\", "/": "/", "b": "\b", "f": "\f", "n": "\n", "r": "\r", "t": "\t"}
_DIGITS = "0123456789"


class _Scanner:
    """Recursive-descent scanner for the object grammar, tracking offsets."""

    __slots__ = ("text", "pos")

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def at_end(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def expect(self, char: str, what: str) -> None:
        if self.peek() != char:
            raise _Fail(ParseErrorKind.BAD_SYNTAX, self.pos, f"expected {what}")
        self.pos += 1

    def parse_string(self) -> str:
        if self.peek() != '"':
            raise _Fail(ParseErrorKind.BAD_SYNTAX, self.pos, "expected a string key")
        self.pos += 1
        out: list[str] = []
        while True:
            if self.at_end():
                raise _Fail(ParseErrorKind.BAD_SYNTAX, self.pos, "unterminated string")
            char = self.text[self.pos]
            if char == '"':
                self.pos += 1
                return "".join(out)
            if char == "\\":
                self.pos += 1
                if self.at_end():
                    raise _Fail(ParseErrorKind.BAD_SYNTAX, self.pos, "unterminated escape")
                esc = self.text[self.pos]
                if esc in _ESCAPES:
                    out.append(_ESCAPES[esc])
                    self.pos += 1
                elif esc == "u":
                    hexpart = self.text[self.pos + 1 : self.pos + 5]
                    if len(hexpart) != 4 or any(c not in "0123456789abcdefABCDEF" for c in hexpart):
                        raise _Fail(
                            ParseErrorKind.BAD_SYNTAX, self.pos - 1, "bad unicode escape"
                        )
                    out.append(chr(int(hexpart, 16)))
                    self.pos += 5
                else:
                    raise _Fail(
                        ParseErrorKind.BAD_SYNTAX, self.pos - 1, f"bad escape \\{esc}"
                    )
            elif ord(char) < 0x20:
                raise _Fail(
                    ParseErrorKind.BAD_SYNTAX, self.pos, "raw control character in string"
                )
            else:
                out.append(char)
                self.pos += 1

    def parse_timestamp(self) -> float:
        start = self.pos
        if self.peek() == "-":
            self.pos += 1
        if self.peek() not in _DIGITS:
            raise _Fail(ParseErrorKind.BAD_TIMESTAMP, start, "expected a number")
        while self.peek() in _DIGITS:
            self.pos += 1
        if self.peek() == ".":
            self.pos += 1
            if self.peek() not in _DIGITS:
                raise _Fail(ParseErrorKind.BAD_TIMESTAMP, start, "missing fraction digits")
            while self.peek() in _DIGITS:
                self.pos += 1
        if self.peek() in "eE":
            self.pos += 1
            if self.peek() in "+-":
                self.pos += 1
            if self.peek() not in _DIGITS:
                raise _Fail(ParseErrorKind.BAD_TIMESTAMP, start, "missing exponent digits")
            while self.peek() in _DIGITS:
                self.pos += 1
        value = float(self.text[start : self.pos])
        if value < 0:
            raise _Fail(ParseErrorKind.BAD_TIMESTAMP, start, f"negative timestamp {value}")
        if not math.isfinite(value):
            raise _Fail(ParseErrorKind.BAD_TIMESTAMP, start, "non-finite timestamp")
        return value

    def parse_interval_tail(self, start: int) -> tuple[int, float, float]:
        # The opening '[' at `start` has been consumed.
        self.skip_ws()
        if self.peek() == "]":
            raise _Fail(ParseErrorKind.BAD_SYNTAX, self.pos, "expected 2 timestamps, got 0")
        onset = self.parse_timestamp()
        self.skip_ws()
        if self.peek() == "]":
            raise _Fail(ParseErrorKind.BAD_SYNTAX, self.pos, "expected 2 timestamps, got 1")
        self.expect(",", "',' between onset and offset")
        self.skip_ws()
        offset = self.parse_timestamp()
        self.skip_ws()
        if self.peek() == ",":
            raise _Fail(ParseErrorKind.BAD_SYNTAX, self.pos, "expected 2 timestamps, got more")
        self.expect("]", "']' closing the interval")
        return start, onset, offset

    def parse_value(self, nested: bool) -> list[tuple[int, float, float]]:
        start = self.pos
        self.expect("[", "an interval array")
        self.skip_ws()
        if nested and self.peek() == "[":
            intervals = []
            while True:
                inner_start = self.pos
                self.expect("[", "an interval")
                intervals.append(self.parse_interval_tail(inner_start))
                self.skip_ws()
                if self.peek() == ",":
                    self.pos += 1
                    self.skip_ws()
                    continue
                self.expect("]", "']' closing the interval list")
                return intervals
        if self.peek() == "]":
            raise _Fail(ParseErrorKind.BAD_SYNTAX, self.pos, "empty interval array")
        return [self.parse_interval_tail(start)]

    def parse_object(self, nested: bool) -> list[tuple[str, int, list[tuple[int, float, float]]]]:
        self.expect("{", "an object of label: [onset, offset] entries")
        self.skip_ws()
        pairs: list[tuple[str, int, list[tuple[int, float, float]]]] = []
        if self.peek() == "}":
            self.pos += 1
            return pairs
        while True:
            label_pos = self.pos
            label = self.parse_string()
            self.skip_ws()
            self.expect(":", "':' after the label")
            self.skip_ws()
            pairs.append((label, label_pos, self.parse_value(nested)))
            self.skip_ws()
            if self.peek() == ",":
                self.pos += 1
                self.skip_ws()
                continue
            self.expect("}", "'}' or ','")
            return pairs


def _parse_object_grammar(
    text: str, task: TaskKind, nested: bool, lenient: bool
) -> ParseResult:
    if not text.strip():
        return ParseError(ParseErrorKind.EMPTY_OUTPUT, 0, "empty output")
    scanner = _Scanner(text)
    try:
        scanner.skip_ws()
        pairs = scanner.parse_object(nested)
        scanner.skip_ws()
        if not scanner.at_end():
            raise _Fail(
                ParseErrorKind.BAD_SYNTAX, scanner.pos, "trailing content after the object"
            )
        events: list[Event] = []
        warnings: list[str] = []
        for label, label_pos, intervals in pairs:
            if not normalize_label(label):
                raise _Fail(ParseErrorKind.BAD_SYNTAX, label_pos, "empty label")
            for pos, onset, offset in intervals:
                if onset > offset:
                    if not lenient:
                        raise _Fail(
                            ParseErrorKind.SWAPPED_BOUNDS,
                            pos,
                            f"onset {onset} exceeds offset {offset}",
                        )
                    warnings.append(f"swapped bounds repaired for {label!r}")
                    onset, offset = offset, onset
                events.append(Event(label, TimeInterval(onset, offset)))
    except _Fail as fail:
        return ParseError(fail.kind, fail.position, fail.detail)
    return ParsedOutput(task=task, events=tuple(events), warnings=tuple(warnings))


def parse_ag(text: str, lenient: bool = False) -> ParseResult:
    """Parse a grounding output: {"query": [onset, offset], ...}."""
    return _parse_object_grammar(text, TaskKind.AUDIO_GROUNDING, nested=False, lenient=lenient)


def parse_sed(text: str, lenient: bool = False) -> ParseResult:
    """Parse a detection output: {"event": [onset, offset], ...}.

    Repeated event classes are accepted both as repeated keys and as an
    array-of-intervals value: {"Dog": [[0.4, 1.2], [5.0, 6.0]]}.
    """
    return _parse_object_grammar(text, TaskKind.SOUND_EVENT_DETECTION, nested=True, lenient=lenient)


_DAC_TIME = re.compile(r"^\d+(?:\.(\d{1,3}))?$")


def parse_dac(text: str, lenient: bool = False) -> ParseResult:
    """Parse a captioning output: one "onset-offset, description" per line.

    Timestamps accept one to three decimal places; the description is
    everything after the first comma. Error positions are 1-based line
    numbers.
    """
    if not text.strip():
        return ParseError(ParseErrorKind.EMPTY_OUTPUT, 0, "empty output")
    events: list[Event] = []
    warnings: list[str] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line:
            continue
        span, sep, description = line.partition(",")
        if not sep:
            return ParseError(
                ParseErrorKind.BAD_SYNTAX, lineno, f"line {lineno}: missing ', description'"
            )
        description = description.strip()
        if not normalize_label(description):
            return ParseError(
                ParseErrorKind.BAD_SYNTAX, lineno, f"line {lineno}: empty description"
            )
        bounds = span.split("-")
        if len(bounds) != 2:
            return ParseError(
                ParseErrorKind.BAD_SYNTAX,
                lineno,
                f"line {lineno}: expected 'onset-offset' before the comma",
            )
        times = []
        non_canonical = False
        for piece in bounds:
            piece = piece.strip()
            match = _DAC_TIME.match(piece)
            if not match:
                return ParseError(
                    ParseErrorKind.BAD_TIMESTAMP,
                    lineno,
                    f"line {lineno}: bad timestamp {piece!r}",
                )
            non_canonical |= match.group(1) is None or len(match.group(1)) != 2
            times.append(float(piece))
        if non_canonical:
            warnings.append(f"line {lineno}: non-canonical timestamp precision")
        onset, offset = times
        if onset > offset:
            if not lenient:
                return ParseError(
                    ParseErrorKind.SWAPPED_BOUNDS,
                    lineno,
                    f"line {lineno}: onset {onset} exceeds offset {offset}",
                )
            warnings.append(f"line {lineno}: swapped bounds repaired")
            onset, offset = offset, onset
        events.append(Event(description, TimeInterval(onset, offset)))
    return ParsedOutput(
        task=TaskKind.DENSE_AUDIO_CAPTIONING, events=tuple(events), warnings=tuple(warnings)
    )


def parse_output(task: TaskKind, text: str, lenient: bool = False) -> ParseResult:
    parser = {
        TaskKind.AUDIO_GROUNDING: parse_ag,
        TaskKind.SOUND_EVENT_DETECTION: parse_sed,
        TaskKind.DENSE_AUDIO_CAPTIONING: parse_dac,
    }[task]
    return parser(text, lenient=lenient)


def _number(value: float) -> str:
    return repr(float(value))


def serialize_ag(events) -> str:
    """Render events in the grounding grammar, one key per event.

    Duplicate labels become repeated keys, preserving event order.
    """
    entries = [
        f"{json.dumps(event.label, ensure_ascii=False)}: "
        f"[{_number(event.interval.onset)}, {_number(event.interval.offset)}]"
        for event in events
    ]
    return "{" + ", ".join(entries) + "}"


def serialize_sed(events) -> str:
    """Render events in the detection grammar.

    Events are grouped by label in first-occurrence order; a label occurring
    once gets a flat [onset, offset], repeated labels an array of intervals.
    """
    grouped: dict[str, list] = {}
    for event in events:
        grouped.setdefault(event.label, []).append(event.interval)
    entries = []
    for label, intervals in grouped.items():
        if len(intervals) == 1:
            value = f"[{_number(intervals[0].onset)}, {_number(intervals[0].offset)}]"
        else:
            value = (
                "["
                + ", ".join(
                    f"[{_number(iv.onset)}, {_number(iv.offset)}]" for iv in intervals
                )
                + "]"
            )
        entries.append(f"{json.dumps(label, ensure_ascii=False)}: {value}")
    return "{" + ", ".join(entries) + "}"


def serialize_dac(events) -> str:
    """Render events as "onset-offset, description" lines (two decimals)."""
    lines = []
    for event in events:
        if len(event.label.splitlines()) != 1:
            raise ValueError(f"caption {event.label!r} cannot contain line breaks")
        if event.label != event.label.strip():
            raise ValueError(
                f"caption {event.label!r} has surrounding whitespace and would not round-trip"
            )
        lines.append(
            f"{event.interval.onset:.2f}-{event.interval.offset:.2f}, {event.label}"
        )
    return "\n".join(lines)


def serialize_output(task: TaskKind, events) -> str:
    serializer = {
        TaskKind.AUDIO_GROUNDING: serialize_ag,
        TaskKind.SOUND_EVENT_DETECTION: serialize_sed,
        TaskKind.DENSE_AUDIO_CAPTIONING: serialize_dac,
    }[task]
    return serializer(events)
