import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tempoloc.prompts import (
    AudioFrame,
    DurationTooLongError,
    InvalidStrideError,
    Timestamp,
    TimestampToken,
    TimestampVocab,
    build_time_prompt,
    render_prompt,
)

EXAMPLE_QUESTION = 'When does "a railroad crossing rings" happen?'
EXAMPLE_RENDERED = (
    "<s><audio><AUDIO><0.04><AUDIO><0.08><AUDIO><0.12><AUDIO><0.16></audio>"
    'When does "a railroad crossing rings" happen?</s>'
)


def item_shape(seq):
    out = []
    for item in seq.items:
        if isinstance(item, AudioFrame):
            out.append(("A", item.index))
        elif isinstance(item, Timestamp):
            out.append(("T", item.token.surface))
    return out


class TestTimestampToken:
    def test_surface_round_trips(self):
        token = TimestampToken.at(0.04)
        assert token.surface == "<0.04>"
        assert float(token.numeric_string) == token.time

    def test_inconsistent_surface_rejected(self):
        with pytest.raises(ValueError):
            TimestampToken(surface="<0.5>", time=0.5)


class TestTimestampVocab:
    def test_default_vocab_is_750_tokens(self):
        vocab = TimestampVocab.build()
        assert len(vocab) == 750
        assert vocab.tokens[0].surface == "<0.04>"
        assert vocab.tokens[-1].surface == "<30.00>"
        times = [t.time for t in vocab.tokens]
        assert times == sorted(times)
        assert len(set(times)) == len(times)

    def test_coarse_vocab(self):
        vocab = TimestampVocab.build(stride=1.0, max_time=2.0)
        assert [t.surface for t in vocab.tokens] == ["<1.00>", "<2.00>"]

    def test_misaligned_max_time_rejected(self):
        with pytest.raises(InvalidStrideError):
            TimestampVocab.build(stride=0.04, max_time=29.99)


class TestBuildTimePrompt:
    def test_example_clip_layout(self):
        seq = build_time_prompt(0.16, 25, 0.04)
        assert item_shape(seq) == [
            ("A", 0), ("T", "<0.04>"),
            ("A", 1), ("T", "<0.08>"),
            ("A", 2), ("T", "<0.12>"),
            ("A", 3), ("T", "<0.16>"),
        ]

    def test_full_range_counts(self):
        seq = build_time_prompt(30.0, 25, 0.04)
        assert seq.n_frames == 750
        assert seq.n_timestamps == 750
        assert seq.timestamp_times()[-1] == 30.0
        assert item_shape(seq)[-1] == ("T", "<30.00>")

    def test_partial_final_frame_still_stamped(self):
        # ceil(0.05 * 25) = 2 frames; the padded second frame ends at 0.08
        seq = build_time_prompt(0.05, 25, 0.04)
        assert item_shape(seq) == [("A", 0), ("T", "<0.04>"), ("A", 1), ("T", "<0.08>")]

    def test_coarser_stride_skips_frames(self):
        seq = build_time_prompt(0.16, 25, 0.08)
        assert item_shape(seq) == [
            ("A", 0), ("A", 1), ("T", "<0.08>"),
            ("A", 2), ("A", 3), ("T", "<0.16>"),
        ]

    def test_duration_too_long(self):
        with pytest.raises(DurationTooLongError):
            build_time_prompt(30.04, 25, 0.04)

    def test_stride_not_frame_multiple(self):
        with pytest.raises(InvalidStrideError):
            build_time_prompt(1.0, 25, 0.05)

    def test_non_positive_duration(self):
        with pytest.raises(ValueError):
            build_time_prompt(0.0, 25, 0.04)


class TestRenderPrompt:
    def test_example_box_rendering(self):
        seq = build_time_prompt(0.16, 25, 0.04)
        assert render_prompt(seq, EXAMPLE_QUESTION) == EXAMPLE_RENDERED

    def test_empty_question_closes_directly(self):
        seq = build_time_prompt(0.04, 25, 0.04)
        assert render_prompt(seq, "").endswith("</audio></s>")

    def test_single_frame(self):
        seq = build_time_prompt(0.04, 25, 0.04)
        assert render_prompt(seq, "q") == "<s><audio><AUDIO><0.04></audio>q</s>"


_ITEM_RE = re.compile(r"<AUDIO>|<\d+\.\d\d>")


def parse_rendered(text):
    """Trivial inverse of render_prompt for the audio segment item stream."""
    body = text.split("<audio>", 1)[1].split("</audio>", 1)[0]
    frames = timestamps = 0
    consumed = 0
    for match in _ITEM_RE.finditer(body):
        assert match.start() == consumed, "unexpected bytes inside the audio segment"
        consumed = match.end()
        if match.group() == "<AUDIO>":
            frames += 1
        else:
            timestamps += 1
    assert consumed == len(body)
    return frames, timestamps


@given(
    duration=st.floats(0.01, 30.0, allow_nan=False),
    k=st.integers(1, 5),
)
def test_render_round_trips_item_counts(duration, k):
    stride = 0.04 * k
    seq = build_time_prompt(duration, 25, stride)
    frames, timestamps = parse_rendered(render_prompt(seq, "why?"))
    assert frames == seq.n_frames
    assert timestamps == seq.n_timestamps


@given(
    duration=st.floats(0.01, 30.0, allow_nan=False),
    k=st.integers(1, 5),
)
def test_timestamp_grid_and_count(duration, k):
    stride = 0.04 * k
    seq = build_time_prompt(duration, 25, stride)
    assert seq.n_timestamps == seq.n_frames // k
    times = seq.timestamp_times()
    for m, time in enumerate(times, start=1):
        assert abs(time - m * stride) < 1e-9
    indices = [item.index for item in seq.items if isinstance(item, AudioFrame)]
    assert indices == list(range(seq.n_frames))
