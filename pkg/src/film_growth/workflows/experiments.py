"""
One pipeline per CLI command.

Each pipeline runs its module chain, writes its artifacts through the run's
exporter and returns a PipelineOutcome; the runner turns outcomes and errors
into exit codes.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import reduce
from typing import Any

from ..core.analysis import (
    gaussian_pair_sampler,
    k_weight_moment,
    lemma61_experiment,
    lemma62_check,
    stationary_scan,
)
from ..core.diagnostics import apriori_check, deterministic_order_check, refinement_check
from ..core.exporters import RunExporter
from ..core.integrator import SimParams, TrajectoryResult, run_trajectory
from ..core.noise import derive_seed
from ..core.observables import PROBE_NAMES, EnsembleStats, merge, series_frame
from ..core.spectral import BasisSpec, BoundaryCondition, zeros
from ..core.stabilizer import (
    StabilizerProfile,
    build_phi,
    gamma_sum,
    hphi_min_eigenvalue,
    select_n_star,
    stabilized_decay_rate,
    tilde_a_form_check,
)
from ..models.schema import RunConfig
from ..models.snapshot_schema import SnapshotRecord
from ..platform.workers import EnsembleExecutor
from ..utils.errors import StabilizerNotNeededError

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-10
ORTHOGONALITY_TOLERANCE = 1e-10
RICHARDSON_DRIFT = 1e-6


@dataclass
class PipelineContext:
    config: RunConfig
    exporter: RunExporter
    executor: EnsembleExecutor

    @property
    def params(self) -> dict[str, Any]:
        return self.config.experiment.resolved_params()

    @property
    def seed(self) -> int:
        return self.config.sim.seed


@dataclass
class PipelineOutcome:
    passed: bool
    summary: dict[str, Any] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)


def _outcome(summary: dict[str, Any], failures: list[str]) -> PipelineOutcome:
    for failure in failures:
        logger.error("Property check failed: %s", failure)
    return PipelineOutcome(passed=not failures, summary=summary, failures=failures)


# ---------------------------------------------------------------------------


def _simulate_one(params: SimParams, probes: tuple[str, ...], seed: int) -> TrajectoryResult:
    return run_trajectory(zeros(params.model.basis), params, probes=probes, seed=seed)


def run_simulate(ctx: PipelineContext) -> PipelineOutcome:
    params = ctx.config.sim_params()
    probes = tuple(ctx.params.get("probes") or PROBE_NAMES)
    seeds = [derive_seed(ctx.seed, i) for i in range(ctx.config.sim.ensemble)]
    logger.info("Phase 1: running %d trajectories (%d steps each)", len(seeds), params.total_steps)
    results = ctx.executor.map_ordered(lambda s: _simulate_one(params, probes, s), seeds)

    logger.info("Phase 2: writing artifacts")
    ctx.exporter.write_snapshot(
        "final_state",
        [SnapshotRecord(t=r.state.t, nu=params.model.nu, u=r.state.u) for r in results],
    )
    recorded = [r for r in results if any(len(s) for s in r.series.values())]
    if not recorded:
        logger.info("No samples after burn-in; only the final snapshot is written")
        return PipelineOutcome(passed=True, summary={"trajectories": len(results), "recorded": 0})

    fingerprint = params.model.fingerprint()
    for r in recorded:
        ctx.exporter.write_series(series_frame(r.series), r.seed)
    stats = reduce(
        merge,
        (
            EnsembleStats.from_samples(
                {n: [s.time_average()] for n, s in r.series.items()}, fingerprint
            )
            for r in recorded
        ),
        EnsembleStats(fingerprint),
    )

    failures = []
    if "mass" in probes:
        worst = max(float(abs(r.series["mass"].values).max()) for r in recorded)
        if worst > MASS_TOLERANCE:
            failures.append(f"mass drift {worst:.3e} exceeds {MASS_TOLERANCE:g}")
    if "orthogonality_residual" in probes and "dxu_l2_sq" in probes:
        for r in recorded:
            scale = (r.series["dxu_l2_sq"].values ** 1.5).clip(min=1.0)
            excess = abs(r.series["orthogonality_residual"].values) / scale
            if excess.max() > ORTHOGONALITY_TOLERANCE:
                failures.append(f"orthogonality residual {excess.max():.3e} on seed {r.seed}")

    spectrum = params.model.spectrum
    if params.stabilizer is not None:
        alpha = stabilized_decay_rate(params.stabilizer, params.model.basis)
    else:
        alpha = spectrum.slowest_decay if spectrum.all_stable else 0.0
    apriori = apriori_check([r.trace for r in recorded], alpha)
    if not apriori.finite:
        failures.append("a-priori fit is not finite")

    ctx.exporter.write_report("ensemble_stats", stats.to_dict())
    ctx.exporter.write_report("apriori", apriori.to_dict())
    summary = {
        "trajectories": len(results),
        "recorded": len(recorded),
        "c_fit": apriori.c_fit,
        "fingerprint": fingerprint,
    }
    return _outcome(summary, failures)


def run_stationary_scan(ctx: PipelineContext) -> PipelineOutcome:
    params = ctx.config.sim_params()
    n_list = [int(n) for n in ctx.params["n_list"]]
    report = stationary_scan(
        n_list,
        params,
        ctx.config.sim.ensemble,
        ctx.seed,
        ctx.executor,
        stationary_start=bool(ctx.params["stationary_start"]),
    )
    ctx.exporter.write_report("stationary_scan", report.to_dict())

    failures = []
    for entry in report.entries:
        if entry.diverged:
            failures.append(f"N={entry.truncation} diverged: {entry.message}")
    for probe, grows in report.growth_flags().items():
        if grows:
            logger.warning("%s grows monotonically in N", probe)
            failures.append(f"{probe} grows with N")
    if not report.finite:
        failures.append("non-finite log-moment estimate")
    return _outcome({"n_values": report.n_values, "agreement": report.agreement()}, failures)


def run_verify_phi(ctx: PipelineContext) -> PipelineOutcome:
    model = ctx.config.model
    nu, L = model.nu, model.length
    if nu >= 0:
        raise StabilizerNotNeededError("No stabilizer is needed for nu >= 0", {"nu": nu})
    p = ctx.params
    grid = int(p["grid"])
    target_c = float(p["target_c"]) if p["target_c"] is not None else abs(nu)
    if p["n_star"] is not None:
        n_star = int(p["n_star"])
    else:
        n_star = select_n_star(L, target_c, nu, grid=grid)

    profile = build_phi(
        n_star, nu, L, 4 * n_star, BoundaryCondition.NEUMANN, drift_sign=model.drift_sign
    )
    certificate = gamma_sum(n_star, L)
    eigen = hphi_min_eigenvalue(profile, grid)
    form = tilde_a_form_check(profile, int(p["samples"]), seed=ctx.seed)
    control_basis = BasisSpec(BoundaryCondition.NEUMANN, L, form.truncation)
    null = StabilizerProfile.null(nu, L, control_basis, model.drift_sign)
    control = tilde_a_form_check(null, int(p["samples"]), N=form.truncation, seed=ctx.seed)

    failures = []
    if not certificate.holds:
        failures.append(
            f"Gamma certificate {certificate.upper:.6g}"
            f" above {certificate.closed_form_bound:.6g}"
        )
    if eigen.refined < abs(nu):
        failures.append(f"min eigenvalue of H_Phi {eigen.refined:.6g} below |nu| = {abs(nu):.6g}")
    if eigen.relative_drift >= RICHARDSON_DRIFT:
        logger.warning("H_Phi eigenvalue drift %.3e between grids", eigen.relative_drift)
    if not form.passed:
        failures.append(f"stabilized form ratio {form.min_ratio:.6g} is not positive")
    if control.passed:
        failures.append("Phi = 0 control unexpectedly passed the negativity check")

    ctx.exporter.write_report(
        "verify_phi",
        {
            "profile": profile.to_dict(),
            "gamma": certificate.to_dict(),
            "hphi": eigen.to_dict(),
            "form_check": form.to_dict(),
            "control": control.to_dict(),
        },
    )
    return _outcome({"n_star": n_star, "min_ratio": form.min_ratio}, failures)


def run_lemma61(ctx: PipelineContext) -> PipelineOutcome:
    p = ctx.params
    model = ctx.config.model_spec()
    report = lemma61_experiment(
        model,
        t_grid=p["t_grid"],
        samples=int(p["samples"]),
        truncations=[int(n) for n in p["n_list"]],
        seed=ctx.seed,
        chunk=int(p["chunk"]),
        oversampling_subsample=int(p["oversampling_subsample"]),
    )
    k_reports = [
        k_weight_moment(float(t), int(p["samples"]), model, seed=ctx.seed, chunk=int(p["chunk"]))
        for t in p["k_weight_t"]
    ]
    ctx.exporter.write_report(
        "lemma61",
        {"convolution": report.to_dict(), "k_weight": [k.to_dict() for k in k_reports]},
    )

    failures = []
    c_hat = report.c_hat()
    if not all(math.isfinite(c) for c in c_hat.values()):
        failures.append("C-hat is not finite")
    if report.variation >= 2.0:
        failures.append(f"C-hat varies by a factor {report.variation:.3g} across N")
    if not report.monotone_small_t():
        logger.warning("Fourth moment not nondecreasing in t on the small-t grid")
    summary = {"c_hat": {str(n): c for n, c in c_hat.items()}, "variation": report.variation}
    return _outcome(summary, failures)


def run_lemma62(ctx: PipelineContext) -> PipelineOutcome:
    p = ctx.params
    reports = []
    for i, K in enumerate(float(k) for k in p["k_values"]):
        reports.append(
            lemma62_check(
                p["x_grid"],
                gaussian_pair_sampler(K, float(p["correlation"])),
                K,
                eps=float(p["eps"]),
                samples=int(p["samples"]),
                seed=derive_seed(ctx.seed, i),
            )
        )
    ctx.exporter.write_report("lemma62", {"checks": [r.to_dict() for r in reports]})
    failures = [
        f"K={r.constant.K}: margin {r.min_margin:.4g} below -3 SE" for r in reports if not r.passed
    ]
    return _outcome({"min_margins": [r.min_margin for r in reports]}, failures)


def run_order_check(ctx: PipelineContext) -> PipelineOutcome:
    p = ctx.params
    report = deterministic_order_check(
        ctx.config.sim_params(),
        refinements=[int(k) for k in p["refinements"]],
        reference_factor=int(p["reference_factor"]),
    )
    ctx.exporter.write_report("order_check", report.to_dict())
    failures = [] if report.passed() else [f"observed order {report.slope:.3f} outside [0.8, 1.2]"]
    return _outcome({"slope": report.slope, "skipped": report.skipped}, failures)


def run_refine_check(ctx: PipelineContext) -> PipelineOutcome:
    p = ctx.params
    report = refinement_check(
        ctx.config.sim_params(),
        truncations=[int(n) for n in p["n_list"]],
        seed=ctx.seed,
        init_amplitude=float(p["init_amplitude"]),
    )
    ctx.exporter.write_report("refine_check", report.to_dict())
    failures = [] if report.strictly_decreasing else ["sup-distance does not decrease with N"]
    return _outcome({"distances": report.distances}, failures)


PIPELINES: dict[str, Callable[[PipelineContext], PipelineOutcome]] = {
    "simulate": run_simulate,
    "stationary-scan": run_stationary_scan,
    "verify-phi": run_verify_phi,
    "lemma61": run_lemma61,
    "lemma62": run_lemma62,
    "order-check": run_order_check,
    "refine-check": run_refine_check,
}
