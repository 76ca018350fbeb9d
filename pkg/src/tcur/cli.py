"""Command-line entry point.

Usage: ``tcur <command> --config <path> [--out <dir>] [--seed <u64>]``

Exit codes: 0 all checks passed, 2 a quantitative check failed, 3 config
error, 4 numerical breakdown.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_and_validate
from .currents import NullBoundaryError
from .experiments import COMMANDS
from .flow import FlowInversionError
from .pde import CFLError

EXIT_OK = 0
EXIT_CHECK_FAILED = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tcur",
        description="Numerical experiments with diffuse space-time currents and the continuity equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a JSON config file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
    return parser


def _print_checks(report: dict) -> None:
    def emit(label: str, ok) -> None:
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {label}")

    if "instances" in report:
        for i, inst in enumerate(report["instances"]):
            emit(f"instance {i} ({inst['envelope']})", inst["ok"])
    checks = report.get("checks", {})
    for key, val in checks.items():
        if isinstance(val, bool):
            emit(key, val)
    emit(report.get("command", "run"), report.get("ok", False))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_and_validate(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=int(args.seed))
        out = args.out if args.out is not None else cfg.out
        out_dir = Path(out) if out else None
        report, ok = COMMANDS[args.command](cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FlowInversionError, CFLError, NullBoundaryError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _print_checks(report)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
