"""
Schema definitions for run configurations and run manifests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

from ..core.integrator import ModelSpec, SimParams
from ..core.noise import NoiseSpectrum
from ..core.spectral import BasisSpec, BoundaryCondition
from ..core.stabilizer import DEFAULT_GRID, StabilizerProfile, build_phi, select_n_star

COMMANDS: tuple[str, ...] = (
    "simulate",
    "stationary-scan",
    "verify-phi",
    "lemma61",
    "lemma62",
    "order-check",
    "refine-check",
)

# Per-command experiment parameters and their defaults
COMMAND_PARAMS: dict[str, dict[str, Any]] = {
    "simulate": {"probes": None},
    "stationary-scan": {"n_list": [16, 32, 64], "stationary_start": True},
    "verify-phi": {"target_c": None, "grid": 512, "samples": 10_000, "n_star": None},
    "lemma61": {
        "t_grid": [1e-4, 1e-3, 1e-2, 1e-1],
        "samples": 20_000,
        "n_list": [32, 64, 128],
        "chunk": 2_000,
        "oversampling_subsample": 2_000,
        "k_weight_t": [1e-4, 1e-3, 1e-2, 1e-1],
    },
    "lemma62": {
        "k_values": [1.0, 4.0],
        "eps": 0.1,
        "x_grid": [1.0, 10.0, 100.0, 10_000.0],
        "samples": 1_000_000,
        "correlation": 0.0,
    },
    "order-check": {"refinements": [1, 2, 4, 8], "reference_factor": 64},
    "refine-check": {"n_list": [8, 16, 32], "init_amplitude": 0.0},
}


@dataclass
class NoiseConfig:
    """Noise block: white, explicit array, or power law c j^-p."""

    kind: str = "white"
    values: list[float] | None = None
    c: float = 1.0
    p: float = 0.0
    bound: float | None = None

    def build(self, N: int) -> NoiseSpectrum:
        if self.kind == "array":
            return NoiseSpectrum.from_values(self.values or [], self.bound)
        if self.kind == "power_law":
            return NoiseSpectrum.power_law(self.c, self.p, N)
        return NoiseSpectrum.white(N)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "values": list(self.values) if self.values is not None else None,
            "c": self.c,
            "p": self.p,
            "bound": self.bound,
        }


@dataclass
class ModelConfig:
    boundary: str = "neumann"
    length: float = 2.0 * math.pi
    nu: float = 1.0
    truncation: int = 32
    drift_sign: int = -1
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def build(self) -> ModelSpec:
        basis = BasisSpec(BoundaryCondition(self.boundary), self.length, self.truncation)
        return ModelSpec(basis, self.nu, self.noise.build(self.truncation), self.drift_sign)

    def to_dict(self) -> dict[str, Any]:
        return {
            "boundary": self.boundary,
            "length": self.length,
            "nu": self.nu,
            "truncation": self.truncation,
            "drift_sign": self.drift_sign,
            "noise": self.noise.to_dict(),
        }


@dataclass
class StabilizerConfig:
    """Shift profile for nu < nu_c; ``n_star`` None selects it from ``target_c``."""

    n_star: int | None = None
    target_c: float | None = None
    grid: int = DEFAULT_GRID

    def build(self, model: ModelSpec) -> StabilizerProfile:
        nu, L = model.nu, model.basis.length
        n_star = self.n_star
        if n_star is None:
            target = self.target_c if self.target_c is not None else abs(nu)
            n_star = select_n_star(L, target, nu, grid=self.grid)
        return build_phi(
            n_star,
            nu,
            L,
            model.basis.truncation,
            model.basis.boundary,
            drift_sign=model.drift_sign,
        )

    def to_dict(self) -> dict[str, Any]:
        return {"n_star": self.n_star, "target_c": self.target_c, "grid": self.grid}


@dataclass
class SimConfig:
    h: float = 1e-3
    T: float = 1.0
    burn_in: float = 0.0
    stride: int = 10
    seed: int = 0
    ensemble: int = 1
    nonlinear: bool = True
    padding: int | None = None
    stabilizer: StabilizerConfig | None = None

    def build(self, model: ModelSpec) -> SimParams:
        return SimParams(
            h=self.h,
            T=self.T,
            model=model,
            burn_in=self.burn_in,
            stabilizer=self.stabilizer.build(model) if self.stabilizer else None,
            record_stride=self.stride,
            nonlinear=self.nonlinear,
            padding=self.padding,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "h": self.h,
            "T": self.T,
            "burn_in": self.burn_in,
            "stride": self.stride,
            "seed": self.seed,
            "ensemble": self.ensemble,
            "nonlinear": self.nonlinear,
            "padding": self.padding,
            "stabilizer": self.stabilizer.to_dict() if self.stabilizer else None,
        }


@dataclass
class ExperimentConfig:
    command: str = "simulate"
    params: dict[str, Any] = field(default_factory=dict)

    def resolved_params(self) -> dict[str, Any]:
        """Command defaults overlaid with the configured params."""
        return {**COMMAND_PARAMS.get(self.command, {}), **self.params}

    def to_dict(self) -> dict[str, Any]:
        return {"command": self.command, "params": dict(self.params)}


@dataclass
class RunConfig:
    """A complete, validated run configuration."""

    model: ModelConfig = field(default_factory=ModelConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    output_dir: str = "runs/out"

    def with_seed(self, seed: int) -> RunConfig:
        return replace(self, sim=replace(self.sim, seed=seed))

    def with_output_dir(self, output_dir: str) -> RunConfig:
        return replace(self, output_dir=output_dir)

    def with_command(self, command: str) -> RunConfig:
        return replace(self, experiment=replace(self.experiment, command=command))

    def model_spec(self) -> ModelSpec:
        return self.model.build()

    def sim_params(self) -> SimParams:
        return self.sim.build(self.model_spec())

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model.to_dict(),
            "sim": self.sim.to_dict(),
            "experiment": self.experiment.to_dict(),
            "output_dir": self.output_dir,
        }


@dataclass
class ArtifactEntry:
    """One emitted file, relative to the output directory."""

    path: str
    sha256: str
    size_bytes: int

    def to_dict(self) -> dict[str, Any]:
        return {"path": self.path, "sha256": self.sha256, "size_bytes": self.size_bytes}


@dataclass
class RunManifest:
    """Metadata for one dispatched run; the only artifact carrying wall-clock data."""

    run_id: str
    command: str
    config: dict[str, Any]
    artifact_version: str
    started_at: str
    finished_at: str | None = None
    duration_seconds: float | None = None
    exit_code: int | None = None
    passed: bool | None = None
    files: list[ArtifactEntry] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "command": self.command,
            "config": self.config,
            "artifact_version": self.artifact_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "duration_seconds": self.duration_seconds,
            "exit_code": self.exit_code,
            "passed": self.passed,
            "files": [entry.to_dict() for entry in self.files],
        }
