"""Synthetic grounding environment and a linear-Gaussian boundary policy.

Each episode hides one salient event on a fixed-length timeline; the policy
reads three saliency summaries (mass centroid, first and last threshold
crossing) and samples an [onset, offset] prediction from two Gaussians. A
group of rollouts per episode is scored through the full text round trip
(serialize -> parse -> clip metrics), fused per the configured reward mode,
and the policy follows plain REINFORCE with group-normalized advantages.

Per-clip event F1 with a single reference event is binary, so sampled groups
frequently receive identical main rewards; this environment exists to show,
at desk scale, that variance-gated reward fusion recovers the lost learning
signal.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .intervals import Event, EventList, TaskKind, TimeInterval
from .metrics import MatchConfig
from .parsers import serialize_ag
from .rewards import MODE_ADAPTIVE, MODE_MAIN_ONLY, RewardConfig, score_group
from .rng import derive_rng

STD_FLOOR = 1e-3
TRAIN_STD_FLOOR = 0.05  # tighter projection during training keeps 1/std^2 bounded
HELDOUT_CLIPS = 200
HELDOUT_EPISODE_BASE = 1_000_000
TARGET_LABEL = "target sound"
DEFAULT_TOY_LR = 0.001  # pinned by scripts/calibrate_toy_lr.py
N_FEATURES = 3
N_PARAMS = 10

_LOG_2PI = math.log(2.0 * math.pi)

CSV_HEADER = (
    "iteration",
    "mean_r_main",
    "mean_r_aux",
    "zero_adv_frac",
    "used_fusion_rate",
    "heldout_miou",
    "heldout_ebf1",
)


class TrainingDivergedError(RuntimeError):
    """A parameter became non-finite during training."""


@dataclass(frozen=True)
class EnvConfig:
    clip_duration: float = 10.0
    frame_rate: float = 25.0
    n_events: int = 1
    min_event_len: float = 0.5
    max_event_len: float = 3.0
    saliency_snr: float = 4.0
    noise_std: float = 0.25
    seed: int = 0

    def __post_init__(self) -> None:
        if self.clip_duration <= 0 or self.frame_rate <= 0:
            raise ValueError("clip_duration and frame_rate must be positive")
        if not 0 < self.min_event_len <= self.max_event_len < self.clip_duration:
            raise ValueError(
                "need 0 < min_event_len <= max_event_len < clip_duration, got "
                f"{self.min_event_len}, {self.max_event_len}, {self.clip_duration}"
            )
        if self.n_events != 1:
            raise ValueError("only single-event clips are supported")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")

    @property
    def n_frames(self) -> int:
        return int(round(self.clip_duration * self.frame_rate))

    def to_dict(self) -> dict:
        return {
            "clip_duration": self.clip_duration,
            "frame_rate": self.frame_rate,
            "n_events": self.n_events,
            "min_event_len": self.min_event_len,
            "max_event_len": self.max_event_len,
            "saliency_snr": self.saliency_snr,
            "noise_std": self.noise_std,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Observation:
    """One episode: a saliency track plus the hidden target interval."""

    saliency: np.ndarray
    target: TimeInterval
    clip_duration: float
    frame_rate: float

    def __post_init__(self) -> None:
        saliency = np.ascontiguousarray(self.saliency, dtype=np.float64)
        saliency.setflags(write=False)
        object.__setattr__(self, "saliency", saliency)


def frame_centers(cfg: EnvConfig) -> np.ndarray:
    return (np.arange(cfg.n_frames) + 0.5) / cfg.frame_rate


def env_sample(cfg: EnvConfig, episode_index: int) -> Observation:
    """Deterministic episode for (cfg.seed, episode_index).

    The target interval is placed uniformly (respecting the length bounds);
    saliency is a unit background plus saliency_snr inside the target, plus
    Gaussian noise of scale noise_std.
    """
    rng = derive_rng(cfg.seed, "episode", episode_index)
    length = rng.uniform(cfg.min_event_len, cfg.max_event_len)
    onset = rng.uniform(0.0, cfg.clip_duration - length)
    target = TimeInterval(onset, onset + length)

    centers = frame_centers(cfg)
    saliency = np.ones(cfg.n_frames)
    saliency[(centers >= target.onset) & (centers <= target.offset)] += cfg.saliency_snr
    saliency = saliency + rng.normal(0.0, cfg.noise_std, cfg.n_frames)
    return Observation(
        saliency=saliency,
        target=target,
        clip_duration=cfg.clip_duration,
        frame_rate=cfg.frame_rate,
    )


def features(obs: Observation) -> np.ndarray:
    """Three saliency summaries: [centroid, first_cross, last_cross].

    Each is a time expressed as a fraction of the clip duration, which keeps
    all policy-weight gradients on a common scale. Crossings use a
    data-driven threshold midway between the median (the background) and the
    peak, so no environment parameter leaks into the policy input.
    """
    n = obs.saliency.shape[0]
    centers = (np.arange(n) + 0.5) / obs.frame_rate
    mid = obs.clip_duration / 2.0

    mass = np.maximum(obs.saliency, 0.0)
    total = float(mass.sum())
    centroid = float((centers * mass).sum() / total) if total > 0 else mid

    threshold = (float(np.median(obs.saliency)) + float(obs.saliency.max())) / 2.0
    above = np.nonzero(obs.saliency >= threshold)[0]
    if above.size == 0:
        first_cross = last_cross = mid
    else:
        first_cross = float(centers[above[0]])
        last_cross = float(centers[above[-1]])
    return np.array([centroid, first_cross, last_cross]) / obs.clip_duration


@dataclass(frozen=True)
class PolicyParams:
    """Linear-Gaussian boundary policy: ten parameters in total."""

    w_on: tuple[float, float, float]
    b_on: float
    log_std_on: float
    w_off: tuple[float, float, float]
    b_off: float
    log_std_off: float

    def __post_init__(self) -> None:
        vec = self.to_vector()
        if not np.all(np.isfinite(vec)):
            raise ValueError("policy parameters must be finite")
        for log_std in (self.log_std_on, self.log_std_off):
            if math.exp(log_std) < STD_FLOOR * (1.0 - 1e-9):
                raise ValueError(f"policy std below the floor {STD_FLOOR}")

    def to_vector(self) -> np.ndarray:
        return np.array(
            [*self.w_on, self.b_on, self.log_std_on, *self.w_off, self.b_off, self.log_std_off]
        )

    @classmethod
    def from_vector(
        cls, vec: np.ndarray, max_std: float, min_std: float = STD_FLOOR
    ) -> "PolicyParams":
        """Build params from a flat vector, projecting stds into range."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (N_PARAMS,):
            raise ValueError(f"expected a vector of {N_PARAMS} parameters, got {vec.shape}")
        lo, hi = math.log(min_std), math.log(max_std)
        return cls(
            w_on=(float(vec[0]), float(vec[1]), float(vec[2])),
            b_on=float(vec[3]),
            log_std_on=float(min(max(vec[4], lo), hi)),
            w_off=(float(vec[5]), float(vec[6]), float(vec[7])),
            b_off=float(vec[8]),
            log_std_off=float(min(max(vec[9], lo), hi)),
        )


INIT_BIAS = 0.4  # pinned by scripts/calibrate_toy_lr.py
INIT_STD = 0.25


def init_policy(env: EnvConfig) -> PolicyParams:
    """Starting point for training: a coarse boundary predictor.

    Boundary means read the crossing features at the correct gain but carry a
    constant late bias, mimicking a roughly-pretrained localizer whose
    boundaries RL then sharpens. Exploration starts commensurate with the
    bias so collar hits occur from the first iterations.
    """
    return PolicyParams(
        w_on=(0.0, env.clip_duration, 0.0),
        b_on=INIT_BIAS,
        log_std_on=math.log(INIT_STD),
        w_off=(0.0, 0.0, env.clip_duration),
        b_off=INIT_BIAS,
        log_std_off=math.log(INIT_STD),
    )


@dataclass(frozen=True)
class PolicyAction:
    """One sampled boundary prediction.

    raw_onset/raw_offset are the Gaussian samples before clamping and
    swapping; logprob is their pre-clamp log-density. interval is the
    playable prediction: clamped to [0, duration], bounds swapped if needed.
    """

    raw_onset: float
    raw_offset: float
    interval: TimeInterval
    logprob: float


def _gaussian_logpdf(x: float, mean: float, std: float) -> float:
    z = (x - mean) / std
    return -math.log(std) - 0.5 * _LOG_2PI - 0.5 * z * z


def _means(params: PolicyParams, feats: np.ndarray) -> tuple[float, float]:
    mu_on = float(np.dot(params.w_on, feats) + params.b_on)
    mu_off = float(np.dot(params.w_off, feats) + params.b_off)
    return mu_on, mu_off


def _act(
    params: PolicyParams, feats: np.ndarray, duration: float, rng: np.random.Generator
) -> PolicyAction:
    mu_on, mu_off = _means(params, feats)
    std_on = math.exp(params.log_std_on)
    std_off = math.exp(params.log_std_off)
    raw_on = float(rng.normal(mu_on, std_on))
    raw_off = float(rng.normal(mu_off, std_off))
    logprob = _gaussian_logpdf(raw_on, mu_on, std_on) + _gaussian_logpdf(
        raw_off, mu_off, std_off
    )
    onset = min(max(raw_on, 0.0), duration)
    offset = min(max(raw_off, 0.0), duration)
    if onset > offset:
        onset, offset = offset, onset
    return PolicyAction(
        raw_onset=raw_on,
        raw_offset=raw_off,
        interval=TimeInterval(onset, offset),
        logprob=logprob,
    )


def policy_act(
    params: PolicyParams, obs: Observation, rng: np.random.Generator
) -> PolicyAction:
    """Sample a boundary prediction from the policy for one observation."""
    return _act(params, features(obs), obs.clip_duration, rng)


def _grad(params: PolicyParams, feats: np.ndarray, raw_on: float, raw_off: float) -> np.ndarray:
    mu_on, mu_off = _means(params, feats)
    var_on = math.exp(2.0 * params.log_std_on)
    var_off = math.exp(2.0 * params.log_std_off)
    d_on = raw_on - mu_on
    d_off = raw_off - mu_off
    grad = np.empty(N_PARAMS)
    grad[0:3] = (d_on / var_on) * feats
    grad[3] = d_on / var_on
    grad[4] = -1.0 + d_on * d_on / var_on
    grad[5:8] = (d_off / var_off) * feats
    grad[8] = d_off / var_off
    grad[9] = -1.0 + d_off * d_off / var_off
    return grad


def logprob_grad(params: PolicyParams, obs: Observation, action: PolicyAction) -> np.ndarray:
    """Analytic gradient of the action's log-density w.r.t. every parameter.

    Ordered as PolicyParams.to_vector: w_on, b_on, log_std_on, w_off, b_off,
    log_std_off.
    """
    return _grad(params, features(obs), action.raw_onset, action.raw_offset)


@dataclass(frozen=True)
class TrainReport:
    """Everything needed to reproduce and inspect one training run."""

    mode: str
    iterations: int
    lr: float
    env: EnvConfig
    reward: RewardConfig
    collar: float
    heldout_clips: int
    initial_heldout_miou: float
    initial_heldout_ebf1: float
    final_heldout_miou: float
    final_heldout_ebf1: float
    zero_advantage_fraction: float
    used_fusion_rate: float
    mean_r_main: tuple[float, ...]
    mean_r_aux: tuple[float, ...]
    zero_adv: tuple[float, ...]
    used_fusion: tuple[float, ...]
    heldout_miou: tuple[float, ...]
    heldout_ebf1: tuple[float, ...]
    final_params: tuple[float, ...]

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "iterations": self.iterations,
            "lr": self.lr,
            "seed": self.env.seed,
            "env": self.env.to_dict(),
            "reward": {
                "epsilon": self.reward.epsilon,
                "group_size": self.reward.group_size,
                "advantage_std_floor": self.reward.advantage_std_floor,
                "main_metric": self.reward.main_metric,
                "aux_metric": self.reward.aux_metric,
            },
            "collar": self.collar,
            "heldout_clips": self.heldout_clips,
            "initial_heldout_miou": self.initial_heldout_miou,
            "initial_heldout_ebf1": self.initial_heldout_ebf1,
            "final_heldout_miou": self.final_heldout_miou,
            "final_heldout_ebf1": self.final_heldout_ebf1,
            "zero_advantage_fraction": self.zero_advantage_fraction,
            "used_fusion_rate": self.used_fusion_rate,
            "final_params": list(self.final_params),
            "curves": {
                "mean_r_main": list(self.mean_r_main),
                "mean_r_aux": list(self.mean_r_aux),
                "zero_adv": list(self.zero_adv),
                "used_fusion": list(self.used_fusion),
                "heldout_miou": list(self.heldout_miou),
                "heldout_ebf1": list(self.heldout_ebf1),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i in range(self.iterations):
            writer.writerow(
                [
                    i,
                    repr(self.mean_r_main[i]),
                    repr(self.mean_r_aux[i]),
                    repr(self.zero_adv[i]),
                    repr(self.used_fusion[i]),
                    repr(self.heldout_miou[i]),
                    repr(self.heldout_ebf1[i]),
                ]
            )
        return buffer.getvalue()


class _HeldoutSet:
    """Fixed evaluation clips with precomputed features, evaluated in bulk."""

    def __init__(self, env: EnvConfig, n_clips: int = HELDOUT_CLIPS):
        observations = [
            env_sample(env, HELDOUT_EPISODE_BASE + i) for i in range(n_clips)
        ]
        self.duration = env.clip_duration
        self.feats = np.stack([features(obs) for obs in observations])
        self.onsets = np.array([obs.target.onset for obs in observations])
        self.offsets = np.array([obs.target.offset for obs in observations])

    def evaluate(self, params: PolicyParams, collar: float) -> tuple[float, float]:
        """(mean IoU, event F1) of the deterministic mean prediction."""
        mu_on = self.feats @ np.asarray(params.w_on) + params.b_on
        mu_off = self.feats @ np.asarray(params.w_off) + params.b_off
        mu_on = np.clip(mu_on, 0.0, self.duration)
        mu_off = np.clip(mu_off, 0.0, self.duration)
        pred_on = np.minimum(mu_on, mu_off)
        pred_off = np.maximum(mu_on, mu_off)

        inter = np.maximum(
            0.0, np.minimum(pred_off, self.offsets) - np.maximum(pred_on, self.onsets)
        )
        union = (pred_off - pred_on) + (self.offsets - self.onsets) - inter
        ious = np.where(union > 0.0, inter / np.maximum(union, 1e-300), 0.0)
        hits = (np.abs(pred_on - self.onsets) <= collar) & (
            np.abs(pred_off - self.offsets) <= collar
        )
        # With one prediction and one reference per clip, micro event F1
        # reduces to the hit fraction.
        return float(ious.mean()), float(hits.mean())


def train(
    policy: Optional[PolicyParams],
    env: EnvConfig,
    reward_cfg: RewardConfig = RewardConfig(),
    iterations: int = 2000,
    lr: float = DEFAULT_TOY_LR,
    mode: str = MODE_ADAPTIVE,
    collar: float = 0.2,
) -> TrainReport:
    """Train the boundary policy with group-sampled REINFORCE.

    Per iteration: draw one episode, sample group_size rollouts, score each
    through the grounding text round trip, fuse rewards per `mode`
    (adaptive = variance-gated product; main_only = event F1 alone), then
    step along sum_i advantage_i * grad logprob_i. The whole run is a pure
    function of (policy, configs): identical inputs give identical reports.
    """
    if mode not in (MODE_ADAPTIVE, MODE_MAIN_ONLY):
        raise ValueError(f"unknown mode {mode!r}")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if iterations >= HELDOUT_EPISODE_BASE:
        raise ValueError("iterations would collide with held-out episode indices")

    params = policy if policy is not None else init_policy(env)
    match_cfg = MatchConfig(collar=collar)
    heldout = _HeldoutSet(env)
    group_size = reward_cfg.group_size

    initial_miou, initial_ebf1 = heldout.evaluate(params, collar)
    mean_r_main: list[float] = []
    mean_r_aux: list[float] = []
    zero_adv: list[float] = []
    used_fusion: list[float] = []
    heldout_miou: list[float] = []
    heldout_ebf1: list[float] = []

    for iteration in range(iterations):
        obs = env_sample(env, iteration)
        feats = features(obs)
        refs = EventList(
            clip_id=f"toy-{iteration}",
            duration=env.clip_duration,
            events=(Event(TARGET_LABEL, obs.target),),
        )
        actions = [
            _act(
                params,
                feats,
                env.clip_duration,
                derive_rng(env.seed, "rollout", iteration * group_size + g),
            )
            for g in range(group_size)
        ]
        texts = [
            serialize_ag([Event(TARGET_LABEL, action.interval)]) for action in actions
        ]
        bundle = score_group(
            TaskKind.AUDIO_GROUNDING, texts, refs, reward_cfg, match_cfg, mode
        )

        update = np.zeros(N_PARAMS)
        for action, advantage in zip(actions, bundle.advantages):
            if advantage != 0.0:
                update += advantage * _grad(params, feats, action.raw_onset, action.raw_offset)
        vec = params.to_vector() + lr * update
        if not np.all(np.isfinite(vec)):
            raise TrainingDivergedError(
                f"non-finite parameter after iteration {iteration}"
            )
        params = PolicyParams.from_vector(
            vec, max_std=env.clip_duration, min_std=TRAIN_STD_FLOOR
        )

        miou, ebf1 = heldout.evaluate(params, collar)
        mean_r_main.append(math.fsum(bundle.r_main) / group_size)
        mean_r_aux.append(math.fsum(bundle.r_aux) / group_size)
        zero_adv.append(1.0 if all(a == 0.0 for a in bundle.advantages) else 0.0)
        used_fusion.append(1.0 if bundle.used_fusion else 0.0)
        heldout_miou.append(miou)
        heldout_ebf1.append(ebf1)

    return TrainReport(
        mode=mode,
        iterations=iterations,
        lr=lr,
        env=env,
        reward=reward_cfg,
        collar=collar,
        heldout_clips=HELDOUT_CLIPS,
        initial_heldout_miou=initial_miou,
        initial_heldout_ebf1=initial_ebf1,
        final_heldout_miou=heldout_miou[-1],
        final_heldout_ebf1=heldout_ebf1[-1],
        zero_advantage_fraction=math.fsum(zero_adv) / iterations,
        used_fusion_rate=math.fsum(used_fusion) / iterations,
        mean_r_main=tuple(mean_r_main),
        mean_r_aux=tuple(mean_r_aux),
        zero_adv=tuple(zero_adv),
        used_fusion=tuple(used_fusion),
        heldout_miou=tuple(heldout_miou),
        heldout_ebf1=tuple(heldout_ebf1),
        final_params=tuple(float(v) for v in params.to_vector()),
    )
