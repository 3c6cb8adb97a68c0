#!/usr/bin/env python3
"""Calibration sweep for the toy RL experiment.

Sweeps initial policy bias, initial exploration std, and learning rate over a
bank of seeds, training both reward modes on each, and reports per-config
robustness: adaptive-mode held-out mIoU gain, the zero-advantage-fraction
margin of main_only over adaptive, and the fusion rate. The winning values
are frozen into tempoloc.toy (init_policy, DEFAULT_TOY_LR) and the acceptance
suite.

Usage:
    python3 scripts/calibrate_toy_lr.py --seeds 10 --iterations 2000
"""

from __future__ import annotations

import argparse
import itertools
import time

from tempoloc.rewards import RewardConfig
from tempoloc.toy import EnvConfig, PolicyParams, train


def make_policy(env: EnvConfig, bias: float, sigma: float) -> PolicyParams:
    """init_policy's shape with the bias and exploration std as sweep knobs."""
    import math

    return PolicyParams(
        w_on=(0.0, env.clip_duration, 0.0),
        b_on=bias,
        log_std_on=math.log(sigma),
        w_off=(0.0, 0.0, env.clip_duration),
        b_off=bias,
        log_std_off=math.log(sigma),
    )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--iterations", type=int, default=2000)
    parser.add_argument("--biases", type=float, nargs="+", default=[0.3, 0.4, 0.5])
    parser.add_argument("--sigmas", type=float, nargs="+", default=[0.25, 0.35, 0.5])
    parser.add_argument("--lrs", type=float, nargs="+", default=[0.0005, 0.001, 0.002])
    args = parser.parse_args()

    seeds = list(range(args.seeds)) + [42]
    rows = []
    for bias, sigma, lr in itertools.product(args.biases, args.sigmas, args.lrs):
        t0 = time.perf_counter()
        gains, margins, fusions, finals, initials = [], [], [], [], []
        for seed in seeds:
            env = EnvConfig(seed=seed)
            policy = make_policy(env, bias, sigma)
            adaptive = train(
                policy, env, RewardConfig(), iterations=args.iterations, lr=lr, mode="adaptive"
            )
            main_only = train(
                policy, env, RewardConfig(), iterations=args.iterations, lr=lr, mode="main_only"
            )
            gains.append(adaptive.final_heldout_miou - adaptive.initial_heldout_miou)
            margins.append(
                main_only.zero_advantage_fraction - adaptive.zero_advantage_fraction
            )
            fusions.append(adaptive.used_fusion_rate)
            finals.append(adaptive.final_heldout_miou)
            initials.append(adaptive.initial_heldout_miou)
        ok = sum(
            1
            for g, m, f in zip(gains, margins, fusions)
            if g >= 0.20 and m > 0 and f > 0
        )
        rows.append((ok, min(gains), min(margins), bias, sigma, lr))
        print(
            f"bias={bias} sigma={sigma} lr={lr}: ok {ok}/{len(seeds)} | "
            f"gain min {min(gains):+.3f} med {sorted(gains)[len(gains)//2]:+.3f} | "
            f"margin min {min(margins):+.3f} | fusion min {min(fusions):.3f} | "
            f"init~{sum(initials)/len(initials):.3f} final~{sum(finals)/len(finals):.3f} "
            f"[{time.perf_counter() - t0:.0f}s]"
        )

    rows.sort(reverse=True)
    best = rows[0]
    print(
        f"\nbest: bias={best[3]} sigma={best[4]} lr={best[5]} "
        f"(ok {best[0]}, worst gain {best[1]:+.3f}, worst margin {best[2]:+.3f})"
    )


if __name__ == "__main__":
    main()
