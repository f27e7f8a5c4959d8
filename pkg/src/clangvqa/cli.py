"""Command-line entry point: gen-data, train, eval, report."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from .data_synth import generate_dataset, load_dataset, load_spec_file
from .errors import ClangError
from .trainer import Checkpoint, MetricsLog, TrainConfig, emit_report, evaluate, train, write_run

U64_MAX = 2**64 - 1


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def _formats(text: str) -> list[str]:
    formats = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in formats if f not in ("csv", "svg")]
    if bad or not formats:
        raise argparse.ArgumentTypeError(f"formats must be a subset of csv,svg; got {text!r}")
    return formats


def thread_cap() -> int:
    raw = os.environ.get("CLANG_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"CLANG_THREADS must be a positive integer, got {raw!r}")
    if n < 1:
        raise SystemExit(f"CLANG_THREADS must be a positive integer, got {raw!r}")
    return n


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def cmd_gen_data(args) -> int:
    spec = replace(load_spec_file(args.spec), seed=args.seed)
    dataset = generate_dataset(spec, args.out)
    _emit({"out": str(args.out), "train": len(dataset.train), "val": len(dataset.val),
           "seed": spec.seed})
    return 0


def cmd_train(args) -> int:
    config = TrainConfig.from_file(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed).validate()
    dataset = load_dataset(args.data)

    def progress(row):
        print(f"epoch {row.epoch:3d} {row.split:5s} acc {row.acc_all:.4f} "
              f"loss {row.losses.total:.4f} ({row.wall_time:.1f}s)", file=sys.stderr, flush=True)

    result = train(config, dataset, progress=progress)
    paths = write_run(result, args.out)
    emit_report(result.log, args.out)
    _emit({"best_epoch": result.checkpoint.epoch, "best_val_accuracy": result.checkpoint.val_accuracy,
           **{k: str(v) for k, v in paths.items()}})
    return 0


def cmd_eval(args) -> int:
    row = evaluate(Checkpoint.load(args.checkpoint), load_dataset(args.data), args.split)
    _emit(row.to_json())
    return 0


def cmd_report(args) -> int:
    written = emit_report(MetricsLog.load(args.log), args.out, args.format)
    _emit({k: str(v) for k, v in written.items()})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clangvqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic train/val feature-file pair")
    p.add_argument("--spec", required=True, type=Path, help="dataset spec JSON")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", required=True, type=_u64)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model and write checkpoints and metrics")
    p.add_argument("--config", required=True, type=Path, help="training config JSON")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=_u64, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--split", required=True, choices=("train", "val"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render a metrics log as CSV and/or SVG")
    p.add_argument("--log", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--format", type=_formats, default=["csv", "svg"])
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with threadpool_limits(limits=thread_cap()):
        try:
            return args.func(args)
        except (ClangError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1


if __name__ == "__main__":
    sys.exit(main())
