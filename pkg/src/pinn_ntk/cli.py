"""Command-line entry point: ``pinn-ntk <experiment> [options]``."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import InvalidArgument
from .harness import EXPERIMENTS, NAMED_S, PROFILES, ExperimentConfig, run


def _s_value(text: str):
    if text in NAMED_S:
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a number or one of {sorted(NAMED_S)}, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", help="builtin problem: sine-gordon or kdv")
    common.add_argument("--s", type=_s_value, help="scaling exponent, or a named s profile")
    common.add_argument("--profile", choices=sorted(PROFILES), help="experiment size preset")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="worker threads; output does not depend on it")
    common.add_argument("--config", help="JSON file with ExperimentConfig fields")
    common.add_argument("--out", help="output directory")
    common.add_argument("--widths", type=_int_list, help="comma-separated widths")
    common.add_argument("--repeats", type=int)
    common.add_argument("--k-interval", type=int, dest="k_interval")
    common.add_argument("--steps", type=int, help="gradient-descent steps")
    common.add_argument("--lr", type=float, help="learning rate")

    parser = argparse.ArgumentParser(prog="pinn-ntk", description=__doc__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common])
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
    data["experiment"] = args.experiment
    flags = {
        "problem": args.problem, "s": args.s, "profile": args.profile, "seed": args.seed,
        "jobs": args.jobs, "output_path": args.out, "widths": args.widths,
        "repeats": args.repeats, "k_interval": args.k_interval,
    }
    data.update({k: v for k, v in flags.items() if v is not None})
    training = dict(data.get("training") or {})
    if args.steps is not None:
        training["steps"] = args.steps
    if args.lr is not None:
        training["learning_rate"] = args.lr
    if training:
        data["training"] = training
    return ExperimentConfig(**data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (InvalidArgument, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
