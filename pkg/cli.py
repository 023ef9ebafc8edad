"""
Command Line Interface

    switching-rhc run --preset switch_m4 --out runs/switch_m4
    switching-rhc run --config my_run.json --out runs/mine --t-infinity 2
    switching-rhc compare runs/free runs/switch_m4
    switching-rhc placements --m 9

Exit codes: 0 success, 1 numerical failure (partial artifacts are kept),
2 invalid configuration or arguments.
"""

import argparse
import os
import sys

# thread counts must be fixed before numpy loads its BLAS
_NUM_THREADS = os.environ.get("SWITCHING_RHC_NUM_THREADS")
if _NUM_THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _NUM_THREADS)

import dataclasses  # noqa: E402

from errors import InvalidArgumentError, NumericalFailureError  # noqa: E402
from logging_config import configure_logging, get_logger  # noqa: E402

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="switching-rhc",
        description="Receding horizon switching control of a reaction-convection-diffusion equation",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write its artifacts")
    source = run.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="JSON configuration file")
    source.add_argument("--preset", help="named benchmark preset")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--t-infinity", type=float, default=None, help="final time of the loop")
    run.add_argument("--n-cells", type=int, default=None, help="mesh cells per side")
    run.add_argument("--max-iters", type=int, default=None, help="optimizer iteration cap per window")
    run.add_argument("--solver", choices=("direct", "iterative"), default=None, help="linear solver")

    compare = sub.add_parser("compare", help="tabulate the summaries of finished runs")
    compare.add_argument("paths", nargs="+", help="run directories or summary.json files")
    compare.add_argument("--csv", default=None, help="also write the table to this CSV file")

    placements = sub.add_parser("placements", help="print the default actuator positions")
    placements.add_argument("--m", type=int, required=True, help="number of actuators")
    return parser


def _resolve_config(args):
    from experiments import load_config, preset_config

    config = load_config(args.config) if args.config else preset_config(args.preset)
    overrides = {}
    if args.t_infinity is not None:
        overrides["t_infinity"] = args.t_infinity
    if args.n_cells is not None:
        overrides["n_cells"] = args.n_cells
    if args.solver is not None:
        overrides["linear_solver"] = args.solver
    if args.max_iters is not None:
        overrides["optimizer"] = dataclasses.replace(config.optimizer, max_iters=args.max_iters)
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config.validate()


def _run(args):
    from experiments import run_experiment

    config = _resolve_config(args)
    logger.info("running %s (%s) until t=%g", config.name, config.mode, config.t_infinity)
    artifacts = run_experiment(config, args.out)
    print(f"artifacts written to {artifacts.directory}")
    return EXIT_FAILED if artifacts.failed else EXIT_OK


def _compare(args):
    from experiments import compare_runs, format_comparison

    table = compare_runs(args.paths)
    print(format_comparison(table))
    if args.csv:
        table.to_csv(args.csv, index=False, float_format="%.12e")
    return EXIT_OK


def _placements(args):
    from experiments import placement_table

    print(placement_table(args.m).to_string(index=False, float_format=lambda v: f"{v:.6f}"))
    return EXIT_OK


COMMANDS = {"run": _run, "compare": _compare, "placements": _placements}


def main(argv=None):
    """
    Entry point of the ``switching-rhc`` command

    Args:
        argv: Argument list without the program name; defaults to sys.argv

    Returns:
        int: Process exit code
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID

    try:
        configure_logging(args.log_level)
    except ValueError:
        print(f"error: unknown log level {args.log_level!r}", file=sys.stderr)
        return EXIT_INVALID

    try:
        return COMMANDS[args.command](args)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailureError as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
