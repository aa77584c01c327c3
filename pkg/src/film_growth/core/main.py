"""
Run orchestration: dispatch a command, map outcomes and errors to exit codes,
and always leave a manifest behind.
"""

from __future__ import annotations

import hashlib
import logging
import time
from datetime import datetime

from ..models.config import emit_config
from ..models.schema import COMMANDS, RunConfig, RunManifest
from ..platform.workers import EnsembleExecutor
from ..utils.errors import (
    ConfigError,
    DivergenceError,
    FilmGrowthError,
    StabilizerNotNeededError,
)
from ..utils.logging_utils import log_context
from ..workflows.experiments import PIPELINES, PipelineContext
from .export_standards import ARTIFACT_VERSION
from .exporters import RunExporter
from .run_registry import RunRecord, RunRegistry

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PROPERTY_FAILURE = 1
EXIT_DIVERGENCE = 2
EXIT_CONFIG = 3


def config_digest(config: RunConfig) -> str:
    return hashlib.sha256(emit_config(config).encode("utf-8")).hexdigest()


class FilmGrowthRunner:
    """Orchestrates one run: pipeline, reports, manifest and optional registry entry."""

    def __init__(
        self,
        config: RunConfig,
        run_id: str | None = None,
        executor: EnsembleExecutor | None = None,
        registry: RunRegistry | None = None,
    ):
        self.config = config
        self.run_id = run_id or f"run_{datetime.now().strftime('%Y%m%d_%H%M%S')}"
        self.executor = executor or EnsembleExecutor()
        self.registry = registry
        self.last_outcome = None

    def dispatch(self, command: str | None = None) -> int:
        """Run ``command`` (default: the configured one) and return the exit status."""
        command = command or self.config.experiment.command
        log = log_context(logger, run=self.run_id, command=command, seed=self.config.sim.seed)
        started_at = datetime.now().isoformat()
        start = time.perf_counter()

        config = self.config
        if command in COMMANDS:
            config = config.with_command(command)
        exporter = RunExporter(config.output_dir)

        passed: bool | None = None
        try:
            if command not in PIPELINES:
                raise ConfigError(
                    f"Unknown command {command!r}",
                    violations=[f"command must be one of {list(COMMANDS)}"],
                )
            log.info("Dispatching to %s", config.output_dir)
            outcome = PIPELINES[command](PipelineContext(config, exporter, self.executor))
            self.last_outcome = outcome
            passed = outcome.passed
            exit_code = EXIT_OK if outcome.passed else EXIT_PROPERTY_FAILURE
            if outcome.passed:
                log.info("All property checks passed")
            else:
                log.error("%d property check(s) failed", len(outcome.failures))
        except (ConfigError, StabilizerNotNeededError) as e:
            log.error("Configuration error: %s", e.message)
            exporter.write_report("error", e.to_dict())
            exit_code = EXIT_CONFIG
        except DivergenceError as e:
            log.error("Divergence at t=%.6g (norm %.3e)", e.t, e.norm)
            exporter.write_report("divergence", e.to_dict())
            exit_code = EXIT_DIVERGENCE
        except FilmGrowthError as e:
            log.error("%s: %s", type(e).__name__, e.message)
            exporter.write_report("error", e.to_dict())
            exit_code = EXIT_PROPERTY_FAILURE
        except Exception as e:
            log.exception("Unexpected failure in %s", command)
            exporter.write_report(
                "error", {"error": type(e).__name__, "message": str(e), "context": {}}
            )
            exit_code = EXIT_PROPERTY_FAILURE

        duration = time.perf_counter() - start
        manifest = RunManifest(
            run_id=self.run_id,
            command=command,
            config=config.to_dict(),
            artifact_version=ARTIFACT_VERSION,
            started_at=started_at,
            finished_at=datetime.now().isoformat(),
            duration_seconds=duration,
            exit_code=exit_code,
            passed=passed,
        )
        exporter.write_manifest(manifest)

        if self.registry is not None:
            self.registry.record_run(
                RunRecord(
                    run_id=self.run_id,
                    command=command,
                    seed=config.sim.seed,
                    config_digest=config_digest(config),
                    started_at=started_at,
                    finished_at=manifest.finished_at,
                    exit_code=exit_code,
                    passed=passed,
                    duration_ms=int(duration * 1000),
                    output_dir=str(exporter.output_dir),
                )
            )
        log.info("Finished with exit code %d in %.2fs", exit_code, duration)
        return exit_code
