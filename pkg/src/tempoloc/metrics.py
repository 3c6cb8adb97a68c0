"""Temporal alignment metrics.

Covers interval IoU with recall at thresholds, event-based F1 under a
boundary collar with exact one-to-one matching, and a METEOR-family caption
score (exact + stem matching with the fragmentation penalty; no synonym
stage, hence "meteor_lite").
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .intervals import EventList, TimeInterval, intersect, normalize_label, union_length
from .stemming import porter_stem

DEFAULT_COLLAR = 0.2
DEFAULT_THRESHOLDS = (0.5, 0.7, 0.9)

FIXED_COLLAR = "fixed_collar"
COLLAR_OR_FRACTION = "collar_or_fraction"


class ClipMismatchError(ValueError):
    """Prediction and reference lists name different clips."""


@dataclass(frozen=True)
class MatchConfig:
    """Event-matching rules.

    offset_mode FIXED_COLLAR requires |offset delta| <= collar;
    COLLAR_OR_FRACTION relaxes it to max(collar, offset_fraction * ref length)
    for compatibility with common detection scoring toolchains.
    """

    collar: float = DEFAULT_COLLAR
    offset_mode: str = FIXED_COLLAR
    offset_fraction: float = 0.2
    caption_sim_threshold: float = 0.5
    both_empty_is_perfect: bool = True

    def __post_init__(self) -> None:
        if self.collar < 0:
            raise ValueError(f"collar must be >= 0, got {self.collar}")
        if self.offset_mode not in (FIXED_COLLAR, COLLAR_OR_FRACTION):
            raise ValueError(f"unknown offset_mode {self.offset_mode!r}")
        if self.offset_mode == COLLAR_OR_FRACTION and not 0 < self.offset_fraction <= 1:
            raise ValueError(
                f"offset_fraction must be in (0, 1], got {self.offset_fraction}"
            )
        if not 0 <= self.caption_sim_threshold <= 1:
            raise ValueError(
                f"caption_sim_threshold must be in [0, 1], got {self.caption_sim_threshold}"
            )


@dataclass(frozen=True)
class MetricReport:
    """Flat bundle of metric values; unused fields stay at zero."""

    r_at_0_5: float = 0.0
    r_at_0_7: float = 0.0
    r_at_0_9: float = 0.0
    miou: float = 0.0
    eb_f1: float = 0.0
    eb_precision: float = 0.0
    eb_recall: float = 0.0
    meteor: float = 0.0
    tp: int = 0
    fp: int = 0
    fn: int = 0
    n_items: int = 0

    def to_dict(self) -> dict:
        return {
            "r_at_0_5": self.r_at_0_5,
            "r_at_0_7": self.r_at_0_7,
            "r_at_0_9": self.r_at_0_9,
            "miou": self.miou,
            "eb_f1": self.eb_f1,
            "eb_precision": self.eb_precision,
            "eb_recall": self.eb_recall,
            "meteor": self.meteor,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "n_items": self.n_items,
        }


_RECALL_FIELDS = {0.5: "r_at_0_5", 0.7: "r_at_0_7", 0.9: "r_at_0_9"}


def iou(pred: TimeInterval, gt: TimeInterval) -> float:
    """Intersection over union of two intervals, in [0, 1].

    A zero-length union scores 1 for identical point intervals, else 0.
    """
    union = union_length(pred, gt)
    if union <= 0.0:
        return 1.0 if pred == gt else 0.0
    return intersect(pred, gt) / union


def recall_at(ious: Sequence[float], threshold: float) -> float:
    """Fraction of IoU values meeting the threshold (0 for an empty list)."""
    if not ious:
        return 0.0
    return sum(1 for value in ious if value >= threshold) / len(ious)


def grounding_metrics(
    pairs: Sequence[tuple[Optional[TimeInterval], TimeInterval]],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> MetricReport:
    """Recall at IoU thresholds plus mean IoU over (prediction, reference) pairs.

    A missing prediction (None) counts as IoU 0. Thresholds must be among
    the reported ones (0.5, 0.7, 0.9); use recall_at directly for others.
    """
    for t in thresholds:
        if t not in _RECALL_FIELDS:
            raise ValueError(f"threshold {t} has no report field; use recall_at")
    ious = [0.0 if pred is None else iou(pred, gt) for pred, gt in pairs]
    recalls = {_RECALL_FIELDS[t]: recall_at(ious, t) for t in thresholds}
    return MetricReport(
        miou=math.fsum(ious) / len(ious) if ious else 0.0,
        n_items=len(ious),
        **recalls,
    )


def max_bipartite_matching(
    adjacency: Sequence[Sequence[int]], n_right: int
) -> dict[int, int]:
    """Maximum-cardinality one-to-one matching, left index -> right index.

    Kuhn's augmenting-path algorithm; exact, and cheap at per-clip event
    counts.
    """
    match_right = [-1] * n_right

    def try_augment(left: int, visited: list[bool]) -> bool:
        for right in adjacency[left]:
            if visited[right]:
                continue
            visited[right] = True
            if match_right[right] == -1 or try_augment(match_right[right], visited):
                match_right[right] = left
                return True
        return False

    for left in range(len(adjacency)):
        try_augment(left, [False] * n_right)
    return {left: right for right, left in enumerate(match_right) if left != -1}


def _boundaries_match(pred: TimeInterval, ref: TimeInterval, cfg: MatchConfig) -> bool:
    if abs(pred.onset - ref.onset) > cfg.collar:
        return False
    tolerance = cfg.collar
    if cfg.offset_mode == COLLAR_OR_FRACTION:
        tolerance = max(cfg.collar, cfg.offset_fraction * ref.length)
    return abs(pred.offset - ref.offset) <= tolerance


def match_events(
    preds: EventList,
    refs: EventList,
    cfg: MatchConfig,
    similarity: Optional[Callable[[str, str], float]] = None,
) -> dict[int, int]:
    """One-to-one matching of prediction events to reference events.

    A pair is eligible when the labels agree (exact normalized match, or
    `similarity` >= cfg.caption_sim_threshold when a similarity is given) and
    both boundaries fall within the collar rules. Returns pred index -> ref
    index for a maximum-cardinality matching.
    """
    if preds.clip_id != refs.clip_id:
        raise ClipMismatchError(
            f"predictions are for clip {preds.clip_id!r}, references for {refs.clip_id!r}"
        )

    def labels_match(pred_label: str, ref_label: str) -> bool:
        if similarity is None:
            return normalize_label(pred_label) == normalize_label(ref_label)
        return similarity(pred_label, ref_label) >= cfg.caption_sim_threshold

    adjacency = [
        [
            j
            for j, ref in enumerate(refs.events)
            if labels_match(pred.label, ref.label)
            and _boundaries_match(pred.interval, ref.interval, cfg)
        ]
        for pred in preds.events
    ]
    return max_bipartite_matching(adjacency, len(refs.events))


def _f1_from_counts(tp: int, fp: int, fn: int, cfg: MatchConfig) -> tuple[float, float, float]:
    if tp + fp + fn == 0:
        value = 1.0 if cfg.both_empty_is_perfect else 0.0
        return value, value, value
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def eb_f1(
    preds: EventList,
    refs: EventList,
    cfg: MatchConfig = MatchConfig(),
    similarity: Optional[Callable[[str, str], float]] = None,
) -> MetricReport:
    """Event-based F1 for one clip under the boundary collar.

    Matched pairs are true positives; unmatched predictions false positives;
    unmatched references false negatives. A clip with no events on either
    side scores 1 by convention (cfg.both_empty_is_perfect).
    """
    matching = match_events(preds, refs, cfg, similarity)
    tp = len(matching)
    fp = len(preds.events) - tp
    fn = len(refs.events) - tp
    precision, recall, f1 = _f1_from_counts(tp, fp, fn, cfg)
    return MetricReport(
        eb_f1=f1,
        eb_precision=precision,
        eb_recall=recall,
        tp=tp,
        fp=fp,
        fn=fn,
        n_items=len(refs.events),
    )


def eb_f1_corpus(
    clips: Sequence[tuple[EventList, EventList]],
    cfg: MatchConfig = MatchConfig(),
    similarity: Optional[Callable[[str, str], float]] = None,
    average: str = "micro",
) -> MetricReport:
    """Corpus event-based F1 over (predictions, references) clip pairs.

    micro (default): sums TP/FP/FN across clips, then derives P/R/F1.
    macro: mean of per-clip F1 values (counts still reported summed).
    """
    if average not in ("micro", "macro"):
        raise ValueError(f"unknown average {average!r}")
    tp = fp = fn = 0
    per_clip = []
    for preds, refs in clips:
        report = eb_f1(preds, refs, cfg, similarity)
        tp += report.tp
        fp += report.fp
        fn += report.fn
        per_clip.append(report.eb_f1)
    if average == "macro" and per_clip:
        f1 = math.fsum(per_clip) / len(per_clip)
        precision, recall, _ = _f1_from_counts(tp, fp, fn, cfg)
    else:
        precision, recall, f1 = _f1_from_counts(tp, fp, fn, cfg)
    return MetricReport(
        eb_f1=f1,
        eb_precision=precision,
        eb_recall=recall,
        tp=tp,
        fp=fp,
        fn=fn,
        n_items=len(clips),
    )


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def _caption_tokens(text: str) -> list[str]:
    return text.lower().translate(_PUNCT_TABLE).split()


def _align_tokens(cand: list[str], ref: list[str]) -> list[tuple[int, int]]:
    # Stage 1: exact surface matches, leftmost-greedy one-to-one.
    ref_used = [False] * len(ref)
    cand_match: list[Optional[int]] = [None] * len(cand)
    for i, token in enumerate(cand):
        for j, ref_token in enumerate(ref):
            if not ref_used[j] and ref_token == token:
                cand_match[i] = j
                ref_used[j] = True
                break
    # Stage 2: stem matches over the leftovers.
    cand_stems = [porter_stem(token) for token in cand]
    ref_stems = [porter_stem(token) for token in ref]
    for i, stem in enumerate(cand_stems):
        if cand_match[i] is not None:
            continue
        for j, ref_stem in enumerate(ref_stems):
            if not ref_used[j] and ref_stem == stem:
                cand_match[i] = j
                ref_used[j] = True
                break
    return [(i, j) for i, j in enumerate(cand_match) if j is not None]


def _count_chunks(pairs: list[tuple[int, int]]) -> int:
    # Pairs arrive in candidate order; a chunk continues while both sides
    # advance by exactly one position.
    chunks = 0
    prev = None
    for ci, ri in pairs:
        if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (ci, ri)
    return chunks


def meteor_lite(candidate: str, reference: str) -> float:
    """METEOR-family caption score without the synonym stage.

    Tokens are lowercased, punctuation-stripped, whitespace-split; unigrams
    align by exact match then Porter-stem match. With m matches over
    |cand| = c and |ref| = r tokens:

        P = m/c, R = m/r, Fmean = 10PR / (R + 9P),
        penalty = 0.5 * (chunks/m)^3, score = Fmean * (1 - penalty).

    Zero matches score 0; two empty strings score 1.
    """
    cand = _caption_tokens(candidate)
    ref = _caption_tokens(reference)
    if not cand and not ref:
        return 1.0
    if not cand or not ref:
        return 0.0
    pairs = _align_tokens(cand, ref)
    m = len(pairs)
    if m == 0:
        return 0.0
    precision = m / len(cand)
    recall = m / len(ref)
    fmean = 10 * precision * recall / (recall + 9 * precision)
    fragmentation = _count_chunks(pairs) / m
    penalty = 0.5 * fragmentation * fragmentation * fragmentation
    return fmean * (1.0 - penalty)


def clip_miou(preds: EventList, refs: EventList) -> float:
    """Mean over reference events of the best label-matched prediction IoU.

    A reference with no label-matched prediction contributes 0. With no
    references at all: 1 if there are also no predictions, else 0.
    """
    if not refs.events:
        return 1.0 if not preds.events else 0.0
    best = []
    for ref in refs.events:
        ref_label = normalize_label(ref.label)
        candidates = [
            iou(pred.interval, ref.interval)
            for pred in preds.events
            if normalize_label(pred.label) == ref_label
        ]
        best.append(max(candidates, default=0.0))
    return math.fsum(best) / len(best)


def dac_metrics(
    preds: EventList, refs: EventList, cfg: MatchConfig = MatchConfig()
) -> MetricReport:
    """Captioning metrics for one clip.

    Event F1 uses caption similarity (meteor_lite >= cfg.caption_sim_threshold)
    as the label rule. The caption score averages meteor_lite over matched
    pairs, counting 0 for every unmatched reference, so it is weighted by
    references.
    """
    matching = match_events(preds, refs, cfg, similarity=meteor_lite)
    tp = len(matching)
    fp = len(preds.events) - tp
    fn = len(refs.events) - tp
    precision, recall, f1 = _f1_from_counts(tp, fp, fn, cfg)
    if refs.events:
        matched_total = math.fsum(
            meteor_lite(preds.events[i].label, refs.events[j].label)
            for i, j in matching.items()
        )
        meteor = matched_total / len(refs.events)
    else:
        meteor = 1.0 if (not preds.events and cfg.both_empty_is_perfect) else 0.0
    return MetricReport(
        eb_f1=f1,
        eb_precision=precision,
        eb_recall=recall,
        meteor=meteor,
        tp=tp,
        fp=fp,
        fn=fn,
        n_items=len(refs.events),
    )
