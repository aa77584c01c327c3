"""
Pathwise diagnostics built on recorded trajectories: the W functional, the
a-priori estimate fit, the deterministic order check and the Galerkin
refinement check.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from ..utils.errors import DivergenceError, InsufficientDataError
from .integrator import (
    DiagnosticTrace,
    ExponentialEulerStepper,
    SimParams,
    TrajectoryState,
    run_trajectory,
)
from .spectral import SpectralField, l2_squared, resize, smooth_field, zeros

logger = logging.getLogger(__name__)

ROUND_OFF_FLOOR = 1e-10


def w_functional(times: np.ndarray, dxw_sup: np.ndarray, s: float, t: float) -> float:
    """W_[s,t] = int_s^t 8 ||dx W_A(r)||_inf^4 dr by trapezoid on the recorded grid.

    Interior endpoints are handled by linear interpolation of the integrand, which keeps
    the functional additive over adjacent intervals.
    """
    times = np.asarray(times, dtype=float)
    integrand = 8.0 * np.asarray(dxw_sup, dtype=float) ** 4
    if times.size < 2:
        raise InsufficientDataError("Need at least two recorded times", {"points": int(times.size)})
    if not s < t:
        raise InsufficientDataError("Interval must satisfy s < t", {"s": s, "t": t})
    lo, hi = float(times[0]), float(times[-1])
    tol = 1e-12 * max(1.0, abs(hi))
    if s < lo - tol or t > hi + tol:
        raise InsufficientDataError(
            "Interval outside the recorded range", {"s": s, "t": t, "range": [lo, hi]}
        )
    inside = (times > s) & (times < t)
    grid = np.concatenate([[s], times[inside], [t]])
    values = np.interp(grid, times, integrand)
    return float(trapezoid(values, grid))


@dataclass
class AprioriReport:
    alpha: float
    c_fit: float
    c_per_trajectory: list[float]
    path_norms: list[float]
    thresholds: list[float]
    tail_probabilities: list[float]

    @property
    def finite(self) -> bool:
        return math.isfinite(self.c_fit) and all(math.isfinite(v) for v in self.path_norms)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "c_fit": self.c_fit,
            "c_per_trajectory": self.c_per_trajectory,
            "path_norms": self.path_norms,
            "thresholds": self.thresholds,
            "tail_probabilities": self.tail_probabilities,
            "finite": self.finite,
        }


def _fit_c(trace: DiagnosticTrace, alpha: float) -> tuple[float, float]:
    data = trace.arrays()
    t = data["t"]
    if t.size < 2:
        raise InsufficientDataError("Trajectory recorded fewer than two diagnostic points")
    W = cumulative_trapezoid(8.0 * data["dxw_sup"] ** 4, t, initial=0.0)
    v_sq = data["v_l2_sq"]
    v0_sq = v_sq[0]
    later = t > t[0]
    growth = np.exp(W[later])
    decayed = np.exp(-alpha * (t[later] - t[0]) + W[later]) * v0_sq
    needed = (v_sq[later] - decayed) / (growth * (W[later] + t[later] - t[0]))
    c = max(0.0, float(np.max(needed)))
    path_norm = math.sqrt(float(np.max(v_sq))) + math.sqrt(float(trapezoid(data["v_h2_sq"], t)))
    return c, path_norm


def apriori_check(
    traces: Sequence[DiagnosticTrace],
    alpha: float,
    thresholds: Sequence[float] | None = None,
) -> AprioriReport:
    """Smallest C with ||v(t)||^2 <= e^{-alpha t + W} ||v(0)||^2 + C e^W (W + t) on every path.

    Also reports P(||v||_{C(0,T,L2)} + ||v||_{L2(0,T,H2)} > r) across the ensemble.
    """
    if not traces:
        raise InsufficientDataError("No trajectories recorded")
    fits = [_fit_c(trace, alpha) for trace in traces]
    cs = [c for c, _ in fits]
    norms = np.array([n for _, n in fits])
    if thresholds is None:
        median = float(np.median(norms))
        thresholds = [median * k for k in (1.0, 2.0, 4.0, 8.0)] if median > 0 else [0.0]
    tails = [float(np.mean(norms > r)) for r in thresholds]
    return AprioriReport(
        alpha=alpha,
        c_fit=max(cs),
        c_per_trajectory=cs,
        path_norms=norms.tolist(),
        thresholds=list(thresholds),
        tail_probabilities=tails,
    )


@dataclass
class OrderReport:
    steps: list[float]
    errors: list[float]
    reference_step: float
    slope: float | None
    ratios: list[float] = field(default_factory=list)

    @property
    def skipped(self) -> bool:
        return self.slope is None

    def passed(self, low: float = 0.8, high: float = 1.2) -> bool:
        return self.skipped or (low <= self.slope <= high)  # type: ignore[operator]

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "errors": self.errors,
            "reference_step": self.reference_step,
            "slope": self.slope,
            "ratios": self.ratios,
            "skipped": self.skipped,
            "passed": self.passed(),
        }


def _final_state(init: SpectralField, params: SimParams) -> SpectralField:
    result = run_trajectory(init, params, probes=[], seed=0)
    return result.state.u


def deterministic_order_check(
    params: SimParams,
    init: SpectralField | None = None,
    refinements: Sequence[int] = (1, 2, 4, 8),
    reference_factor: int = 64,
) -> OrderReport:
    """Noise-off convergence of the stepper against a run at h / reference_factor."""
    params = params.with_model(params.model.without_noise())
    init = init if init is not None else smooth_field(params.model.basis)
    h = params.h

    try:
        reference = _final_state(init, _with_step(params, h / reference_factor))
    except DivergenceError as e:
        e.context["reference"] = True
        raise
    steps, errors = [], []
    for k in refinements:
        hk = h / k
        u = _final_state(init, _with_step(params, hk))
        steps.append(hk)
        errors.append(math.sqrt(l2_squared(u - reference)))
        logger.debug("h=%.4g: error %.4e", hk, errors[-1])

    scale = max(1.0, math.sqrt(l2_squared(reference)))
    ratios = [errors[i] / errors[i + 1] for i in range(len(errors) - 1) if errors[i + 1] > 0]
    if max(errors) <= ROUND_OFF_FLOOR * scale:
        logger.info("Errors at round-off (max %.3e); slope test skipped", max(errors))
        slope = None
    else:
        slope = float(np.polyfit(np.log(steps), np.log(errors), 1)[0])
    return OrderReport(steps, errors, h / reference_factor, slope, ratios)


def _with_step(params: SimParams, h: float) -> SimParams:
    return SimParams(
        h=h,
        T=params.T,
        model=params.model,
        burn_in=0.0,
        stabilizer=params.stabilizer,
        record_stride=max(1, int(round(params.T / h))),
        nonlinear=params.nonlinear,
        padding=params.padding,
        blowup=params.blowup,
    )


@dataclass
class RefinementReport:
    truncations: list[int]
    distances: list[float]

    @property
    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.distances, self.distances[1:], strict=False))

    def to_dict(self) -> dict:
        return {
            "truncations": self.truncations,
            "distances": self.distances,
            "strictly_decreasing": self.strictly_decreasing,
        }


def coupled_distance(params: SimParams, N: int, seed: int, init_amplitude: float = 0.0) -> float:
    """sup_t ||u_N - Pi_N u_2N||_L2 for one noise path shared by both truncations."""
    coarse_params = params.with_model(params.model.with_truncation(N))
    fine_params = params.with_model(params.model.with_truncation(2 * N))
    coarse_basis, fine_basis = coarse_params.model.basis, fine_params.model.basis

    def initial(basis) -> SpectralField:
        return smooth_field(basis, init_amplitude) if init_amplitude else zeros(basis)

    coarse = TrajectoryState.initial(initial(coarse_basis), seed)
    fine = TrajectoryState.initial(initial(fine_basis), seed)
    coarse_step = ExponentialEulerStepper(coarse_params)
    fine_step = ExponentialEulerStepper(fine_params)

    sup = 0.0
    for n in range(1, params.total_steps + 1):
        coarse = coarse_step.step(coarse)
        fine = fine_step.step(fine)
        if n % params.record_stride == 0:
            gap = coarse.u - resize(fine.u, N)
            sup = max(sup, math.sqrt(l2_squared(gap)))
    return sup


def refinement_check(
    params: SimParams,
    truncations: Sequence[int] = (8, 16, 32),
    seed: int = 0,
    init_amplitude: float = 0.0,
) -> RefinementReport:
    distances = [coupled_distance(params, N, seed, init_amplitude) for N in truncations]
    for N, d in zip(truncations, distances, strict=True):
        logger.info("N=%d vs %d: sup distance %.4e", N, 2 * N, d)
    return RefinementReport(list(truncations), distances)
