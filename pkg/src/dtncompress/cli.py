"""Command-line front end.

Three subcommands: ``run`` executes an experiment and writes its report,
``grid`` exports one verified finite-difference grid as CSV, ``poles``
counts and locates the real poles of a single-layer DtN function.  All
output is plot-ready data (JSON/CSV/text); nothing renders figures.
"""

from __future__ import annotations

import argparse
import math
import sys

from .errors import DtnCompressError
from .harness import (
    EXPERIMENTS,
    SWEEP_EXPERIMENTS,
    ExperimentConfig,
    export_grid,
    run_experiment,
)
from .operators import count_real_poles, locate_resonances


def _parse_degrees(text: str) -> tuple[int, int]:
    """Accept 'A..B' (inclusive) or a single degree 'N'."""
    if ".." in text:
        lo_text, hi_text = text.split("..", 1)
        return int(lo_text), int(hi_text)
    n = int(text)
    return n, n


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0, help="base RNG seed")
    parser.add_argument("--digits", type=int, default=40,
                        help="working precision floor for grid conversion")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtn-compress",
        description="Rational DtN compression: fits, grids, and studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write its report")
    run.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    run.add_argument("--degrees", type=_parse_degrees, default=None,
                     metavar="A..B", help="inclusive degree range")
    _add_common(run)
    run.add_argument("--tol", type=float, default=1e-5,
                     help="test-error target for degree searches")
    run.add_argument("--out", required=True, help="report path (.json)")
    run.add_argument("--small", action="store_true",
                     help="shrink 2D operators from side 150 to side 50")

    grid = sub.add_parser("grid", help="export one verified FD grid as CSV")
    grid.add_argument("--experiment", required=True, choices=SWEEP_EXPERIMENTS)
    grid.add_argument("--degree", type=int, required=True)
    _add_common(grid)
    grid.add_argument("--out", required=True, help="grid CSV path")
    grid.add_argument("--small", action="store_true")

    poles = sub.add_parser(
        "poles", help="count and locate real DtN poles of a single layer")
    poles.add_argument("--thickness", type=float, required=True)
    poles.add_argument("--offset", type=float, required=True,
                       help="coefficient offset c of the layer (negative carries waves)")
    return parser


def _cmd_run(args) -> int:
    cfg = ExperimentConfig(
        experiment=args.experiment,
        degrees=args.degrees,
        seed=args.seed,
        digits=args.digits,
        tol=args.tol,
        out=args.out,
        small=args.small,
    )
    report = run_experiment(cfg)
    print(f"wrote {args.out}")

    if report.records:
        usable = [r.test_error for r in report.records if r.test_error is not None]
        if usable:
            print(f"best test error: {min(usable):.3e} "
                  f"over degrees {report.config['degree_lo']}..{report.config['degree_hi']}")
        for key, value in report.predicted_rates.items():
            print(f"predicted {key}: {value:.4f}")
        for key, value in report.fitted_rates.items():
            print(f"fitted {key}: {value:.4f}")
    elif report.experiment == "nyquist_table":
        for row in report.tables["rows"]:
            minimal = row["minimal_degree"]
            shown = "not reached" if minimal is None else minimal
            print(f"{row['setting']} T={row['thickness']}: minimal degree {shown} "
                  f"(reference {row['reference_degree']}, "
                  f"nyquist table {row['nyquist_table']:.2f}, "
                  f"with 1/pi {row['nyquist_with_pi']:.2f})")
    else:
        for row in report.tables["rows"]:
            print(f"T={row['thickness']}: {row['count']} real poles "
                  f"(bracket floor {row['bracket_floor']} + {row['excess']})")
    return 0


def _cmd_grid(args) -> int:
    cfg = ExperimentConfig(
        experiment=args.experiment,
        seed=args.seed,
        digits=args.digits,
        small=args.small,
    )
    summary = export_grid(cfg, args.degree, args.out)
    print(f"wrote {args.out}")
    print(f"degree {summary['degree']}, conversion digits {summary['digits']}")
    print(f"training misfit {summary['training_misfit']:.3e}, "
          f"roundtrip {summary['roundtrip_max_rel']:.3e}, "
          f"solve residual {summary['fd_solve_rel']:.3e}")
    return 0


def _cmd_poles(args) -> int:
    count = count_real_poles(args.thickness, args.offset)
    print(f"real poles: {count}")
    if args.offset < 0:
        bracket = math.floor(args.thickness * math.sqrt(-args.offset) / math.pi)
        print(f"bracket: floor(T*sqrt(-c)/pi) = {bracket}, excess {count - bracket}")
    for root in locate_resonances(args.thickness, args.offset):
        print(f"  lambda = {float(root)!r}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "grid": _cmd_grid, "poles": _cmd_poles}
    try:
        return handlers[args.command](args)
    except (DtnCompressError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
