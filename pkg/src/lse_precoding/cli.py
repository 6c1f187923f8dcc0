"""Command-line entry point.

    lse <mode> [--config FILE] [--set section.key=value ...]
               [--out DIR] [--seed N] [--threads K]

Modes: replica, sweep, simulate, compare, calibrate, saving, plot.
Flags override file values; every run writes a manifest next to its
outputs that reproduces the run byte for byte.
"""
from __future__ import annotations

import argparse
import sys

from .experiments import (ConfigError, ExperimentConfig, apply_overrides,
                          load_config, run, validate_config)

MODES = ("replica", "sweep", "simulate", "compare", "calibrate", "saving", "plot")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lse",
        description="Replica predictions and Monte Carlo validation for "
                    "penalized least-square precoders.")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="section.key=value",
                        help="override a config value (repeatable)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--threads", type=int, help="trial-level parallelism")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = apply_overrides(cfg, args.overrides)
        cfg.mode = args.mode
        if args.out is not None:
            cfg.out = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            cfg.threads = args.threads
        validate_config(cfg)
        written = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for name, path in sorted(written.items()):
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
