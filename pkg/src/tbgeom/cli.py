"""Verification harness for lifted submanifolds in tangent bundles with g-natural metrics.

    tbgeom run --config scenario.toml --suite all [--json report.json] [--seed N] [--tol-scale F]
    tbgeom scalars --config scenario.toml --t-min 0 --t-max 4 --steps 41 --out table.csv

Exit status: 0 when every executed check passes, 1 on a check failure,
2 on a configuration error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, GeometryError
from .gnatural import SCALAR_COLUMNS, scalar_table
from .scenario import load_scenario
from .suites import SUITES, report_json, report_text, run_scenario

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tbgeom", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tbgeom {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run verification suites on a scenario")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--suite", default="all", choices=list(SUITES) + ["all"])
    run.add_argument("--json", type=Path, help="write the JSON report here")
    run.add_argument("--seed", type=int, help="override the grid seed")
    run.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance")
    run.add_argument("--quiet", action="store_true", help="suppress the text table")

    scal = sub.add_parser("scalars", help="tabulate generator-derived scalars as CSV")
    scal.add_argument("--config", required=True, type=Path)
    scal.add_argument("--t-min", type=float, required=True)
    scal.add_argument("--t-max", type=float, required=True)
    scal.add_argument("--steps", type=int, required=True)
    scal.add_argument("--out", type=Path, required=True)
    return parser


def _run(args) -> int:
    scenario = load_scenario(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        scenario = scenario.with_seed(args.seed)
    if not args.tol_scale > 0:
        raise ConfigError("--tol-scale must be positive")
    report = run_scenario(scenario, args.suite, args.tol_scale)
    if args.json:
        args.json.write_text(report_json(report))
    if not args.quiet:
        sys.stdout.write(report_text(report))
    return EXIT_PASS if report["passed"] else EXIT_FAIL


def scalar_grid(t_min: float, t_max: float, steps: int) -> np.ndarray:
    if steps < 1 or t_min > t_max or (steps > 1 and t_min == t_max):
        raise ConfigError(f"empty or invalid t range: [{t_min}, {t_max}] with {steps} steps")
    return np.linspace(t_min, t_max, steps)


def _scalars(args) -> int:
    scenario = load_scenario(args.config)
    gen = scenario.generators
    ts = scalar_grid(args.t_min, args.t_max, args.steps)
    if ts[0] < 0 or ts[-1] > gen.t_max:
        raise ConfigError(f"t range must lie in [0, {gen.t_max}]")
    with args.out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCALAR_COLUMNS)
        for row in scalar_table(gen, ts):
            writer.writerow([repr(float(x)) for x in row])
    return EXIT_PASS


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _run(args) if args.command == "run" else _scalars(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeometryError as exc:
        print(f"check failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
