"""Command-line surface.

Subcommands:
  eval        score a JSONL prediction file against JSONL references
  prompt      build and render a timeline prompt
  embed-init  extend a binary embedding table with timestamp tokens
  train-toy   run the synthetic grounding RL experiment
  reward      annotate reward groups with fused rewards and advantages

All commands are deterministic: identical inputs and seeds produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .embeddings import (
    CharTokenizer,
    CorruptTableError,
    build_timestamp_embeddings,
    read_table,
    write_table,
)
from .intervals import Event, EventList, TaskKind, TimeInterval, normalize_label
from .metrics import (
    MatchConfig,
    dac_metrics,
    eb_f1,
    grounding_metrics,
    iou,
)
from .parsers import ParseError, parse_output
from .prompts import (
    AudioFrame,
    DurationTooLongError,
    InvalidStrideError,
    Timestamp,
    TimestampVocab,
    build_time_prompt,
    render_prompt,
)
from .rewards import (
    DEFAULT_EPSILON,
    DEFAULT_STD_FLOOR,
    RewardConfig,
    adaptive_reward,
    grpo_advantages,
)
from .toy import DEFAULT_TOY_LR, EnvConfig, TrainingDivergedError, train

_TASKS = {task.value: task for task in TaskKind}


class CliError(Exception):
    """User-facing failure; message printed to stderr, exit code 1."""


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _read_jsonl(path: str) -> list[dict]:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    records = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}:{lineno}: bad JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise CliError(f"{path}:{lineno}: expected an object per line")
        records.append(record)
    return records


def _load_references(path: str) -> dict[str, EventList]:
    refs: dict[str, EventList] = {}
    for record in _read_jsonl(path):
        try:
            clip_id = str(record["id"])
            duration = float(record["duration"])
            events = tuple(
                Event(
                    str(entry["label"]),
                    TimeInterval(float(entry["onset"]), float(entry["offset"])),
                )
                for entry in record.get("events", [])
            )
            parsed = EventList(clip_id=clip_id, duration=duration, events=events)
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(f"{path}: bad reference record {record!r}: {exc}") from exc
        if clip_id in refs:
            raise CliError(f"{path}: duplicate reference id {clip_id!r}")
        refs[clip_id] = parsed
    return refs


def _load_predictions(path: str) -> dict[str, str]:
    preds: dict[str, str] = {}
    for record in _read_jsonl(path):
        try:
            clip_id = str(record["id"])
            raw_output = str(record["raw_output"])
        except (KeyError, TypeError) as exc:
            raise CliError(f"{path}: bad prediction record {record!r}: {exc}") from exc
        if clip_id in preds:
            raise CliError(f"{path}: duplicate prediction id {clip_id!r}")
        preds[clip_id] = raw_output
    return preds


def _prediction_events(refs: EventList, events) -> EventList:
    duration = max(
        refs.duration, max((e.interval.offset for e in events), default=0.0)
    )
    return EventList(clip_id=refs.clip_id, duration=duration, events=tuple(events))


def cmd_eval(args: argparse.Namespace) -> int:
    task = _TASKS[args.task]
    references = _load_references(args.references)
    predictions = _load_predictions(args.predictions)
    for clip_id in predictions:
        if clip_id not in references:
            raise CliError(f"prediction id {clip_id!r} not found in references")

    cfg = MatchConfig(collar=args.collar, caption_sim_threshold=args.sim_threshold)
    parse_failures = 0
    tp = fp = fn = 0
    grounding_pairs: list[tuple[TimeInterval | None, TimeInterval]] = []
    meteor_weighted = 0.0
    total_ref_events = 0

    for clip_id, refs in references.items():
        raw_output = predictions.get(clip_id)
        events: tuple[Event, ...] = ()
        if raw_output is not None:
            parsed = parse_output(task, raw_output)
            if isinstance(parsed, ParseError):
                parse_failures += 1
            else:
                events = parsed.events
        preds = _prediction_events(refs, events)

        if task is TaskKind.DENSE_AUDIO_CAPTIONING:
            report = dac_metrics(preds, refs, cfg)
            meteor_weighted += report.meteor * len(refs.events)
        else:
            report = eb_f1(preds, refs, cfg)
            for ref_event in refs.events:
                ref_label = normalize_label(ref_event.label)
                matched = [
                    p.interval
                    for p in preds.events
                    if normalize_label(p.label) == ref_label
                ]
                best = max(
                    matched, key=lambda iv: iou(iv, ref_event.interval), default=None
                )
                grounding_pairs.append((best, ref_event.interval))
        tp += report.tp
        fp += report.fp
        fn += report.fn
        total_ref_events += len(refs.events)

    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if tp + fp + fn == 0:
        precision = recall = f1 = 1.0
    else:
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    result = {
        "task": task.value,
        "n_clips": len(references),
        "scored_clips": len(references) - parse_failures,
        "parse_failures": parse_failures,
        "eb_f1": f1,
        "eb_precision": precision,
        "eb_recall": recall,
        "tp": tp,
        "fp": fp,
        "fn": fn,
        "n_items": total_ref_events,
    }
    if task is TaskKind.DENSE_AUDIO_CAPTIONING:
        result["meteor"] = (
            meteor_weighted / total_ref_events if total_ref_events else 1.0
        )
    else:
        grounding = grounding_metrics(grounding_pairs)
        result["miou"] = grounding.miou
        result["r_at_0_5"] = grounding.r_at_0_5
        result["r_at_0_7"] = grounding.r_at_0_7
        result["r_at_0_9"] = grounding.r_at_0_9
    _write_text(args.out, json.dumps(result, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_prompt(args: argparse.Namespace) -> int:
    try:
        seq = build_time_prompt(
            args.duration, args.frame_rate, args.stride, args.max_time
        )
    except (DurationTooLongError, InvalidStrideError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    if args.format == "text":
        _write_text(args.out, render_prompt(seq, args.question) + "\n")
    else:
        items = []
        for item in seq.items:
            if isinstance(item, AudioFrame):
                items.append({"kind": "audio_frame", "index": item.index})
            elif isinstance(item, Timestamp):
                items.append(
                    {
                        "kind": "timestamp",
                        "surface": item.token.surface,
                        "time": item.token.time,
                    }
                )
            else:
                items.append({"kind": "text", "token": item.token})
        payload = {
            "duration": seq.duration,
            "frame_rate": seq.frame_rate,
            "question": args.question,
            "n_items": len(items),
            "items": items,
        }
        _write_text(args.out, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_embed_init(args: argparse.Namespace) -> int:
    try:
        base = read_table(args.base)
    except (OSError, CorruptTableError) as exc:
        raise CliError(f"cannot load base table: {exc}") from exc
    try:
        tokenizer_spec = json.loads(Path(args.tokenizer).read_text(encoding="utf-8"))
        if not isinstance(tokenizer_spec, dict):
            raise ValueError("tokenizer file must be a JSON object of char -> id")
        tokenizer = CharTokenizer({str(k): int(v) for k, v in tokenizer_spec.items()})
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot load tokenizer: {exc}") from exc
    try:
        vocab = TimestampVocab.build(args.stride, args.max_time)
        extended = build_timestamp_embeddings(vocab, tokenizer, base)
        write_table(extended, args.out)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    print(f"added {len(extended) - len(base)} timestamp rows ({len(extended)} total)")
    return 0


_CONFIG_SCHEMA: dict[str, type] = {
    "clip_duration": float,
    "frame_rate": float,
    "n_events": int,
    "min_event_len": float,
    "max_event_len": float,
    "saliency_snr": float,
    "noise_std": float,
    "seed": int,
    "epsilon": float,
    "group_size": int,
    "advantage_std_floor": float,
    "iterations": int,
    "lr": float,
    "collar": float,
}

_ENV_KEYS = (
    "clip_duration",
    "frame_rate",
    "n_events",
    "min_event_len",
    "max_event_len",
    "saliency_snr",
    "noise_std",
    "seed",
)
_REWARD_KEYS = ("epsilon", "group_size", "advantage_std_floor")


def parse_config_text(text: str) -> dict:
    """Parse a flat "key = value" config; unknown keys are rejected by name."""
    values: dict = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_SCHEMA:
            raise CliError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise CliError(f"config line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _CONFIG_SCHEMA[key](value)
        except ValueError as exc:
            raise CliError(
                f"config line {lineno}: bad value for {key!r}: {value!r}"
            ) from exc
    return values


def cmd_train_toy(args: argparse.Namespace) -> int:
    values: dict = {}
    if args.config is not None:
        try:
            values = parse_config_text(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise CliError(f"cannot read {args.config}: {exc}") from exc
    if args.seed is not None:
        values["seed"] = args.seed
    try:
        env = EnvConfig(**{k: values[k] for k in _ENV_KEYS if k in values})
        reward_cfg = RewardConfig(**{k: values[k] for k in _REWARD_KEYS if k in values})
        report = train(
            None,
            env,
            reward_cfg,
            iterations=values.get("iterations", 2000),
            lr=values.get("lr", DEFAULT_TOY_LR),
            mode=args.mode,
            collar=values.get("collar", 0.2),
        )
    except (TrainingDivergedError, ValueError) as exc:
        raise CliError(str(exc)) from exc

    out_path = Path(args.out)
    curves_path = out_path.with_suffix(".csv")
    if curves_path == out_path:
        curves_path = Path(str(out_path) + ".curves.csv")
    out_path.write_text(report.to_json(), encoding="utf-8")
    curves_path.write_text(report.to_csv(), encoding="utf-8")
    print(
        f"{args.mode}: heldout mIoU {report.initial_heldout_miou:.4f} -> "
        f"{report.final_heldout_miou:.4f}, event F1 {report.final_heldout_ebf1:.4f} "
        f"({out_path}, {curves_path})"
    )
    return 0


def cmd_reward(args: argparse.Namespace) -> int:
    try:
        raw = Path(args.groups).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {args.groups}: {exc}") from exc
    lines_out: list[str] = []
    had_errors = False
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise ValueError("expected a JSON object")
            r_main = [float(v) for v in record["r_main"]]
            r_aux = [float(v) for v in record["r_aux"]]
            for name, vec in (("r_main", r_main), ("r_aux", r_aux)):
                for v in vec:
                    if not math.isfinite(v):
                        raise ValueError(f"{name} contains non-finite entry")
            fused, used_fusion = adaptive_reward(r_main, r_aux, args.epsilon)
            advantages = grpo_advantages(fused, args.std_floor)
        except (ValueError, KeyError, TypeError) as exc:
            had_errors = True
            lines_out.append(
                json.dumps({"line": lineno, "error": str(exc)}, sort_keys=True)
            )
            continue
        annotated = dict(record)
        annotated["fused"] = list(fused)
        annotated["advantages"] = list(advantages)
        annotated["used_fusion"] = used_fusion
        lines_out.append(json.dumps(annotated, sort_keys=True))
    _write_text(args.out, "".join(line + "\n" for line in lines_out))
    return 1 if had_errors else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tempoloc",
        description="Timeline prompts, timestamped-output scoring, and toy reward-fusion RL.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="score predictions against references")
    p_eval.add_argument("--task", choices=sorted(_TASKS), required=True)
    p_eval.add_argument("--predictions", required=True, help="JSONL of {id, raw_output}")
    p_eval.add_argument(
        "--references", required=True, help="JSONL of {id, duration, events}"
    )
    p_eval.add_argument("--collar", type=float, default=0.2)
    p_eval.add_argument("--sim-threshold", type=float, default=0.5, dest="sim_threshold")
    p_eval.add_argument("--out", default=None, help="report path (default: stdout)")
    p_eval.set_defaults(func=cmd_eval)

    p_prompt = sub.add_parser("prompt", help="build and render a timeline prompt")
    p_prompt.add_argument("--duration", type=float, required=True)
    p_prompt.add_argument("--frame-rate", type=float, default=25.0, dest="frame_rate")
    p_prompt.add_argument("--stride", type=float, default=0.04)
    p_prompt.add_argument("--max-time", type=float, default=30.0, dest="max_time")
    p_prompt.add_argument("--question", default="")
    p_prompt.add_argument("--format", choices=("text", "json"), default="text")
    p_prompt.add_argument("--out", default=None)
    p_prompt.set_defaults(func=cmd_prompt)

    p_embed = sub.add_parser("embed-init", help="extend an embedding table")
    p_embed.add_argument("--base", required=True, help="base table (TPEB + .names)")
    p_embed.add_argument("--tokenizer", required=True, help="JSON object: char -> id")
    p_embed.add_argument("--stride", type=float, default=0.04)
    p_embed.add_argument("--max-time", type=float, default=30.0, dest="max_time")
    p_embed.add_argument("--out", required=True)
    p_embed.set_defaults(func=cmd_embed_init)

    p_train = sub.add_parser("train-toy", help="run the synthetic grounding RL loop")
    p_train.add_argument("--config", default=None, help="flat key = value file")
    p_train.add_argument("--mode", choices=("adaptive", "main_only"), default="adaptive")
    p_train.add_argument("--seed", type=int, default=None, help="overrides config seed")
    p_train.add_argument("--out", required=True, help="JSON report path")
    p_train.set_defaults(func=cmd_train_toy)

    p_reward = sub.add_parser("reward", help="annotate reward groups")
    p_reward.add_argument("--groups", required=True, help="JSONL of {r_main, r_aux}")
    p_reward.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p_reward.add_argument("--std-floor", type=float, default=DEFAULT_STD_FLOOR, dest="std_floor")
    p_reward.add_argument("--out", default=None)
    p_reward.set_defaults(func=cmd_reward)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
