#!/usr/bin/env python3
"""
treesliced - Command-Line Entry Point

    python src/main.py run configs/distance_minimal.json [--seed N] [--out PATH] [--threads T]
    python src/main.py selftest [--quick]
    python src/main.py bench [--n 1000 2000 ...] [--d 10 ...]
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from treesliced import __version__
from treesliced.cli.commands import EXIT_CONFIG_ERROR, execute, run_config
from treesliced.cli.config_manager import BenchGrid, ExperimentConfig
from treesliced.cli.selftest import SelfTestPlan
from treesliced.utils.logger import setup_logger

LOG_DIR_ENV_VAR = "TREESLICED_LOG_DIR"


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with its three subcommands."""
    parser = argparse.ArgumentParser(prog="treesliced", description="Nonlinear tree-sliced Wasserstein distances")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="root seed (overrides the manifest)")
    common.add_argument("--out", type=Path, default=None, help="results CSV")
    common.add_argument("--threads", type=int, default=None, help="worker threads for the per-tree map")

    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", parents=[common], help="run an experiment manifest")
    run.add_argument("config", type=Path, help="JSON manifest")

    selftest = subparsers.add_parser("selftest", parents=[common], help="run the property suites")
    selftest.add_argument("--quick", action="store_true", help="fewer instances per suite")

    bench = subparsers.add_parser("bench", parents=[common], help="runtime benchmark over n x d")
    bench.add_argument("--n", type=int, nargs="+", default=None, help="support sizes")
    bench.add_argument("--d", type=int, nargs="+", default=None, help="dimensions")
    bench.add_argument("--repeats", type=int, default=None, help="timed runs per cell (>= 3)")
    return parser


def _adhoc_config(args: argparse.Namespace) -> ExperimentConfig:
    settings = {"command": args.command}
    if args.seed is not None:
        settings["seed"] = args.seed
    if args.threads is not None:
        settings["threads"] = args.threads
    if args.command == "selftest" and args.quick:
        settings["selftest"] = SelfTestPlan.quick()
    if args.command == "bench":
        grid = {key: value for key, value in (("n", args.n), ("d", args.d), ("repeats", args.repeats)) if value}
        settings["bench"] = BenchGrid(**grid)
    return ExperimentConfig(**settings)


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, configure logging and dispatch."""
    load_dotenv()
    args = build_parser().parse_args(argv)

    log_dir = os.getenv(LOG_DIR_ENV_VAR)
    setup_logger(logging.DEBUG if args.verbose else logging.INFO, Path(log_dir) if log_dir else None)
    logging.info(f"Starting treesliced {__version__}: {args.command}")

    if args.command == "run":
        return run_config(args.config, seed=args.seed, out=args.out, threads=args.threads)

    try:
        config = _adhoc_config(args)
    except ValidationError as e:
        logging.error(f"Invalid arguments: {e}")
        return EXIT_CONFIG_ERROR
    return execute(config, args.out)


if __name__ == "__main__":
    sys.exit(main())
