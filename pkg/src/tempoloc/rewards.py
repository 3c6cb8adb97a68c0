"""Per-sample task rewards, variance-gated fusion, and group advantages.

The main reward (event F1) is threshold-based and discrete, so a sampled
group often receives identical values, which zeroes every advantage and
wastes the group. When the main reward's population variance within a group
falls below epsilon, the fused reward becomes the elementwise product
main * aux, recovering a smooth ranking signal while the main reward keeps
weighting its magnitude; otherwise the main reward is used unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .intervals import EventList, TaskKind
from .metrics import MatchConfig, clip_miou, dac_metrics, eb_f1
from .parsers import ParseError, parse_output

DEFAULT_EPSILON = 1e-6
DEFAULT_GROUP_SIZE = 4
DEFAULT_STD_FLOOR = 1e-8

MODE_ADAPTIVE = "adaptive"
MODE_MAIN_ONLY = "main_only"


class LengthMismatchError(ValueError):
    """Group vectors have different lengths."""


class NonFiniteError(ValueError):
    """A group vector contains a non-finite entry."""


@dataclass(frozen=True)
class RewardConfig:
    epsilon: float = DEFAULT_EPSILON
    group_size: int = DEFAULT_GROUP_SIZE
    advantage_std_floor: float = DEFAULT_STD_FLOOR
    main_metric: str = "eb_f1"
    aux_metric: str = "auto"  # miou for grounding/detection, meteor for captioning

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.group_size < 2:
            raise ValueError(f"group_size must be >= 2, got {self.group_size}")
        if self.advantage_std_floor <= 0:
            raise ValueError(
                f"advantage_std_floor must be > 0, got {self.advantage_std_floor}"
            )


@dataclass(frozen=True)
class GroupRewardBundle:
    """Reward vectors and normalized advantages for one sampled group."""

    r_main: tuple[float, ...]
    r_aux: tuple[float, ...]
    fused: tuple[float, ...]
    advantages: tuple[float, ...]
    used_fusion: bool

    def to_dict(self) -> dict:
        return {
            "r_main": list(self.r_main),
            "r_aux": list(self.r_aux),
            "fused": list(self.fused),
            "advantages": list(self.advantages),
            "used_fusion": self.used_fusion,
        }


def _check_finite(values: Sequence[float], name: str) -> None:
    for value in values:
        if not math.isfinite(value):
            raise NonFiniteError(f"{name} contains non-finite entry {value!r}")


def population_variance(values: Sequence[float]) -> float:
    # Plain multiplication, not **2: pow() is not correctly rounded on every
    # libm, and these sums feed bit-reproducibility guarantees.
    mean = math.fsum(values) / len(values)
    return math.fsum((v - mean) * (v - mean) for v in values) / len(values)


def sample_reward(
    task: TaskKind,
    prediction_text: str,
    refs: EventList,
    cfg: MatchConfig = MatchConfig(),
) -> tuple[float, float]:
    """(main, aux) reward for one sampled prediction against its references.

    main is the clip event F1; aux is the clip mean best-IoU for grounding
    and detection, the clip caption score for captioning. Any parse failure
    yields (0, 0) so malformed generations never earn reward.
    """
    parsed = parse_output(task, prediction_text)
    if isinstance(parsed, ParseError):
        return 0.0, 0.0
    # Predictions may legally name times past the reference clip end; widen
    # the container duration so they are scored as-is rather than rejected.
    duration = max(
        refs.duration, max((e.interval.offset for e in parsed.events), default=0.0)
    )
    preds = EventList(clip_id=refs.clip_id, duration=duration, events=parsed.events)
    if task is TaskKind.DENSE_AUDIO_CAPTIONING:
        report = dac_metrics(preds, refs, cfg)
        return report.eb_f1, report.meteor
    report = eb_f1(preds, refs, cfg)
    return report.eb_f1, clip_miou(preds, refs)


def adaptive_reward(
    r_main: Sequence[float], r_aux: Sequence[float], epsilon: float = DEFAULT_EPSILON
) -> tuple[tuple[float, ...], bool]:
    """Fused group reward: main * aux when Var(main) < epsilon, else main."""
    if len(r_main) != len(r_aux):
        raise LengthMismatchError(
            f"r_main has {len(r_main)} entries, r_aux has {len(r_aux)}"
        )
    if len(r_main) < 2:
        raise LengthMismatchError("group vectors need at least 2 entries")
    _check_finite(r_main, "r_main")
    _check_finite(r_aux, "r_aux")
    if population_variance(r_main) < epsilon:
        return tuple(m * a for m, a in zip(r_main, r_aux)), True
    return tuple(float(v) for v in r_main), False


def grpo_advantages(
    rewards: Sequence[float], std_floor: float = DEFAULT_STD_FLOOR
) -> tuple[float, ...]:
    """Group-normalized advantages: (r - mean) / population std.

    A group whose population std falls below std_floor carries no ranking
    information and returns all zeros.
    """
    if len(rewards) < 2:
        raise LengthMismatchError("advantage groups need at least 2 entries")
    _check_finite(rewards, "rewards")
    mean = math.fsum(rewards) / len(rewards)
    std = math.sqrt(population_variance(rewards))
    if std < std_floor:
        return tuple(0.0 for _ in rewards)
    return tuple((r - mean) / std for r in rewards)


def score_group(
    task: TaskKind,
    prediction_texts: Sequence[str],
    refs: EventList,
    reward_cfg: RewardConfig = RewardConfig(),
    match_cfg: MatchConfig = MatchConfig(),
    mode: str = MODE_ADAPTIVE,
) -> GroupRewardBundle:
    """Score one group of sampled predictions for the same clip."""
    if mode not in (MODE_ADAPTIVE, MODE_MAIN_ONLY):
        raise ValueError(f"unknown mode {mode!r}")
    if len(prediction_texts) != reward_cfg.group_size:
        raise LengthMismatchError(
            f"expected {reward_cfg.group_size} predictions, got {len(prediction_texts)}"
        )
    scored = [sample_reward(task, text, refs, match_cfg) for text in prediction_texts]
    r_main = tuple(main for main, _ in scored)
    r_aux = tuple(aux for _, aux in scored)
    if mode == MODE_ADAPTIVE:
        fused, used_fusion = adaptive_reward(r_main, r_aux, reward_cfg.epsilon)
    else:
        fused, used_fusion = r_main, False
    advantages = grpo_advantages(fused, reward_cfg.advantage_std_floor)
    return GroupRewardBundle(
        r_main=r_main,
        r_aux=r_aux,
        fused=fused,
        advantages=advantages,
        used_fusion=used_fusion,
    )
