#!/usr/bin/env python3
"""
Quick demo: a short stable-regime ensemble and the noise-off order check.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from src.film_growth.core.diagnostics import deterministic_order_check  # noqa: E402
from src.film_growth.core.main import FilmGrowthRunner  # noqa: E402
from src.film_growth.models.schema import RunConfig, SimConfig  # noqa: E402
from src.film_growth.utils.logging_utils import setup_run_logging  # noqa: E402


def main() -> int:
    setup_run_logging("demo", "simulate")
    config = RunConfig(
        sim=SimConfig(h=1e-3, T=0.5, burn_in=0.1, stride=10, seed=1, ensemble=4),
        output_dir="runs/demo",
    )
    print("🚀 film-growth demo: 4 trajectories, N=32, T=0.5")
    exit_code = FilmGrowthRunner(config, run_id="demo").dispatch("simulate")
    print(f"simulate exit code: {exit_code} (artifacts in {config.output_dir})")

    report = deterministic_order_check(config.sim_params())
    slope = "skipped" if report.skipped else f"{report.slope:.3f}"
    print(f"noise-off order of convergence: {slope}")
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
