#!/usr/bin/env python3
"""Adaptive vs main-only reward on the synthetic grounding environment.

Trains both modes from the same initial policy on each seed and prints a
per-seed comparison of held-out mIoU, held-out event F1, the fraction of
zero-advantage (wasted) groups, and the fusion rate, plus aggregate means.
Optionally writes the per-seed table as CSV.

Usage:
    python3 scripts/compare_reward_modes.py --seeds 10 --iterations 2000
    python3 scripts/compare_reward_modes.py --seeds 5 --out comparison.csv
"""

from __future__ import annotations

import argparse
import csv
import sys

from tempoloc.rewards import RewardConfig
from tempoloc.toy import DEFAULT_TOY_LR, EnvConfig, train


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--iterations", type=int, default=2000)
    parser.add_argument("--lr", type=float, default=DEFAULT_TOY_LR)
    parser.add_argument("--out", default=None, help="optional CSV path for the table")
    args = parser.parse_args()

    rows = []
    header = (
        "seed", "initial_miou",
        "adaptive_miou", "main_only_miou",
        "adaptive_ebf1", "main_only_ebf1",
        "adaptive_zero_adv", "main_only_zero_adv",
        "adaptive_fusion_rate",
    )
    print(
        f"{'seed':>4} {'init':>6} | {'miou(a)':>8} {'miou(m)':>8} | "
        f"{'ebf1(a)':>8} {'ebf1(m)':>8} | {'waste(a)':>8} {'waste(m)':>8} | {'fusion':>6}"
    )
    for seed in range(args.seeds):
        env = EnvConfig(seed=seed)
        adaptive = train(
            None, env, RewardConfig(), iterations=args.iterations, lr=args.lr, mode="adaptive"
        )
        main_only = train(
            None, env, RewardConfig(), iterations=args.iterations, lr=args.lr, mode="main_only"
        )
        row = (
            seed,
            adaptive.initial_heldout_miou,
            adaptive.final_heldout_miou,
            main_only.final_heldout_miou,
            adaptive.final_heldout_ebf1,
            main_only.final_heldout_ebf1,
            adaptive.zero_advantage_fraction,
            main_only.zero_advantage_fraction,
            adaptive.used_fusion_rate,
        )
        rows.append(row)
        print(
            f"{seed:>4} {row[1]:>6.3f} | {row[2]:>8.3f} {row[3]:>8.3f} | "
            f"{row[4]:>8.3f} {row[5]:>8.3f} | {row[6]:>8.3f} {row[7]:>8.3f} | {row[8]:>6.3f}"
        )

    def mean(i: int) -> float:
        return sum(r[i] for r in rows) / len(rows)

    print(
        f"mean {mean(1):>6.3f} | {mean(2):>8.3f} {mean(3):>8.3f} | "
        f"{mean(4):>8.3f} {mean(5):>8.3f} | {mean(6):>8.3f} {mean(7):>8.3f} | {mean(8):>6.3f}"
    )
    wasted_saved = mean(7) - mean(6)
    print(
        f"\nadaptive mode recovers {wasted_saved:.1%} of groups that main-only wastes "
        f"(zero advantages), and ends {mean(2) - mean(3):+.3f} mIoU ahead on average."
    )

    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    sys.exit(main())
