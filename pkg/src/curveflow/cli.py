"""Command line interface.

Subcommands:
  run           execute one flow from a config file
  lambda-study  sweep uniform time steps and tabulate max |lambda0|
  presets       list built-in initial curves and their default parameters

Exit codes: 0 run reached its end time, 2 breakdown, 3 structure violation,
4 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .config import parse_config
from .driver import EXIT_CONFIG, lambda_study, run
from .errors import ConfigError
from .presets import PRESETS


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curveflow",
        description="Structure-preserving gradient flows of closed planar spline curves",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one flow")
    p_run.add_argument("--config", required=True, help="path to a key = value config file")

    p_study = sub.add_parser(
        "lambda-study", help="uniform-step sweep of the dissipation multiplier"
    )
    p_study.add_argument("--config", required=True, help="base config (willmore_tv)")
    p_study.add_argument("--imax", type=int, required=True, help="largest halving exponent i")
    p_study.add_argument("--jobs", type=int, default=None, help="parallel case count")

    sub.add_parser("presets", help="list built-in presets")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "presets":
        for preset in PRESETS.values():
            print(f"{preset.name}: {preset.description}")
            defaults = ", ".join(f"{k}={v}" for k, v in preset.defaults.items())
            print(f"  defaults: {defaults}")
        return 0
    try:
        config = parse_config(args.config)
        if args.command == "run":
            return run(config)
        results, code = lambda_study(config, args.imax, jobs=args.jobs)
        for index, dt, lam, _ in results:
            print(f"i={index} dt={dt!r} max|lambda0|={lam!r}")
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
