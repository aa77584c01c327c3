from __future__ import annotations

import argparse
import logging
import os
import sys
from datetime import datetime

from ..core.main import EXIT_CONFIG, FilmGrowthRunner
from ..core.run_registry import RunRegistry
from ..models.config import config_from_mapping
from ..models.schema import COMMANDS, RunConfig
from ..platform.workers import create_executor
from ..utils.errors import ConfigError
from ..utils.logging_utils import load_config, setup_run_logging

try:
    from dotenv import load_dotenv

    load_dotenv()
except ImportError as _e:
    logging.debug("dotenv not loaded (module missing): %s", _e)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="film-growth",
        description="Stochastic thin-film growth: simulation and estimate verification",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  film-growth simulate --config configs/simulate.yaml --seed 7
  film-growth stationary-scan --config configs/stationary_scan.yaml --threads 8
  film-growth verify-phi --config configs/verify_phi.yaml --out runs/phi
  film-growth lemma62 --quiet

Exit codes: 0 all checks passed, 1 property check failed, 2 divergence, 3 configuration error.
        """,
    )
    parser.add_argument(
        "command",
        nargs="?",
        choices=COMMANDS,
        help="Pipeline to run (default: experiment.command from the config)",
    )
    parser.add_argument("--config", type=str, help="YAML run configuration")
    parser.add_argument("--seed", type=int, help="Master seed (overrides sim.seed)")
    parser.add_argument("--out", type=str, help="Output directory (overrides output_dir)")
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Worker threads for ensembles (default: FILM_GROWTH_THREADS or 1)",
    )
    parser.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    parser.add_argument(
        "--registry",
        type=str,
        default=os.getenv("FILM_GROWTH_REGISTRY"),
        help="SQLite run ledger (default: FILM_GROWTH_REGISTRY, disabled when unset)",
    )
    parser.add_argument("--log-file", type=str, help="Also write logs to this file")
    return parser


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    config = config_from_mapping(load_config(args.config)) if args.config else RunConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(
                "Invalid --seed", violations=[f"--seed must be >= 0 (got {args.seed})"]
            )
        config = config.with_seed(args.seed)
    if args.out:
        config = config.with_output_dir(args.out)
    if args.command:
        config = config.with_command(args.command)
    return config


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, dispatch one run and return its exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = _load_run_config(args)
    except ConfigError as e:
        print(f"❌ Configuration error: {e.message}", file=sys.stderr)
        if e.line is not None:
            print(f"   line {e.line}", file=sys.stderr)
        for violation in e.violations:
            print(f"   - {violation}", file=sys.stderr)
        return EXIT_CONFIG

    command = config.experiment.command
    run_id = f"run_{datetime.now().strftime('%Y%m%d_%H%M%S')}"
    level = "WARNING" if args.quiet else os.getenv("FILM_GROWTH_LOG_LEVEL", "INFO")
    setup_run_logging(run_id, command, level=level, log_file=args.log_file)

    registry = RunRegistry(args.registry) if args.registry else None
    executor = create_executor(args.threads)
    runner = FilmGrowthRunner(config, run_id=run_id, executor=executor, registry=registry)
    exit_code = runner.dispatch()

    if not args.quiet:
        status = "✅ passed" if exit_code == 0 else f"❌ exit code {exit_code}"
        print(f"{command}: {status} ({config.output_dir})")
        outcome = runner.last_outcome
        if outcome is not None:
            for failure in outcome.failures:
                print(f"   - {failure}")
    return exit_code


def run() -> None:
    """Synchronous entrypoint for the console script."""
    sys.exit(main())


if __name__ == "__main__":
    run()
