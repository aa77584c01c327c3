"""
Exponential Euler integration of the N-mode Galerkin system

    du = (A u + B(u)) dt + dW_N,    B(u) = -Pi_N d^2 (d u)^2,

with the stochastic convolution W_A advanced on the same noise path, the
v = u - W_A (- drift_sign Phi_N) decomposition, and the running a-priori diagnostics.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import TYPE_CHECKING, Any

import numpy as np

from ..utils.errors import BasisError, ConfigError, DivergenceError
from .noise import ConvolutionState, NoiseSpectrum, WienerState, mild_noise_increment, ou_step
from .spectral import (
    BasisSpec,
    LinearSpectrum,
    SpectralField,
    derivative,
    hs_squared,
    l2_squared,
    linear_spectrum,
    nonlinearity,
    norm,
)

if TYPE_CHECKING:
    from .observables import ObservableSeries, ProbeSet
    from .stabilizer import StabilizerProfile

logger = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e8
STEP_CAP_FACTOR = 0.5
BURN_IN_RELAXATION_TIMES = 10.0


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Domain, viscosity and noise of one Galerkin model.

    ``drift_sign`` is the sign in front of d^2 (d u)^2 in the drift. The default
    -1 gives du = (A u - d^2 (d u)^2) dt + dW.
    """

    basis: BasisSpec
    nu: float
    noise: NoiseSpectrum
    drift_sign: int = -1

    def __post_init__(self) -> None:
        if self.noise.size != self.basis.truncation:
            raise ConfigError(
                "Noise spectrum length differs from the truncation",
                context={"alphas": self.noise.size, "N": self.basis.truncation},
            )
        if self.drift_sign not in (-1, 1):
            raise ConfigError(
                "drift_sign must be -1 or +1", context={"drift_sign": self.drift_sign}
            )
        if not math.isfinite(self.nu):
            raise ConfigError("nu must be finite", context={"nu": self.nu})

    @cached_property
    def spectrum(self) -> LinearSpectrum:
        return linear_spectrum(self.basis, self.nu)

    def with_truncation(self, N: int) -> ModelSpec:
        basis = self.basis.with_truncation(N)
        return ModelSpec(basis, self.nu, self.noise.resized(N), self.drift_sign)

    def with_noise(self, noise: NoiseSpectrum) -> ModelSpec:
        return ModelSpec(self.basis, self.nu, noise, self.drift_sign)

    def without_noise(self) -> ModelSpec:
        return self.with_noise(NoiseSpectrum.zero(self.basis.truncation))

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.basis.to_dict(),
            "nu": self.nu,
            "noise": self.noise.to_dict(),
            "drift_sign": self.drift_sign,
        }

    def fingerprint(self) -> str:
        payload = self.to_dict()
        payload["alphas"] = [float(a) for a in self.noise.alphas]
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def default_burn_in(spectrum: LinearSpectrum, cap: float | None = None) -> float:
    """Ten slowest linear relaxation times, optionally capped."""
    slowest = spectrum.slowest_decay
    burn = BURN_IN_RELAXATION_TIMES / slowest if slowest > 0 else 0.0
    if cap is not None:
        burn = min(burn, cap)
    return burn


def _stabilizer_mismatches(profile: StabilizerProfile, model: ModelSpec) -> list[str]:
    found = []
    if profile.drift_sign != model.drift_sign:
        found.append(
            f"stabilizer drift_sign {profile.drift_sign} differs from model {model.drift_sign}"
        )
    if not math.isclose(profile.nu, model.nu):
        found.append(f"stabilizer nu {profile.nu} differs from model nu {model.nu}")
    if not math.isclose(profile.length, model.basis.length):
        found.append(f"stabilizer length {profile.length} differs from model {model.basis.length}")
    return found


@dataclass(frozen=True, eq=False)
class SimParams:
    h: float
    T: float
    model: ModelSpec
    burn_in: float = 0.0
    stabilizer: StabilizerProfile | None = None
    record_stride: int = 1
    nonlinear: bool = True
    padding: int | None = None
    blowup: float = BLOWUP_THRESHOLD

    def __post_init__(self) -> None:
        violations = []
        if not self.h > 0:
            violations.append(f"sim.h must be > 0 (got {self.h})")
        if not self.burn_in >= 0:
            violations.append(f"sim.burn_in must be >= 0 (got {self.burn_in})")
        if not self.T >= self.burn_in:
            violations.append(f"sim.T must be >= burn_in (got T={self.T}, burn_in={self.burn_in})")
        if self.record_stride < 1:
            violations.append(f"sim.stride must be >= 1 (got {self.record_stride})")
        if self.stabilizer is not None:
            violations.extend(_stabilizer_mismatches(self.stabilizer, self.model))
        if violations:
            raise ConfigError("Invalid simulation parameters", violations=violations)
        cap = self.step_cap
        if self.h > cap:
            logger.warning(
                "Step h=%g exceeds the recommended cap 0.5/|lambda_N| = %g", self.h, cap
            )

    @property
    def step_cap(self) -> float:
        lam_n = abs(float(self.model.spectrum.eigenvalues[-1]))
        return STEP_CAP_FACTOR / lam_n if lam_n > 0 else math.inf

    @property
    def total_steps(self) -> int:
        return int(round(self.T / self.h))

    @property
    def burn_in_steps(self) -> int:
        return int(round(self.burn_in / self.h))

    def with_model(self, model: ModelSpec) -> SimParams:
        return replace(self, model=model)

    def to_dict(self) -> dict[str, Any]:
        return {
            "h": self.h,
            "T": self.T,
            "burn_in": self.burn_in,
            "record_stride": self.record_stride,
            "nonlinear": self.nonlinear,
            "padding": self.padding,
            "model": self.model.to_dict(),
            "stabilizer_n_star": self.stabilizer.n_star if self.stabilizer else None,
        }


@dataclass(frozen=True)
class DiagnosticAccumulators:
    """Running integral 8||dx W_A||_inf^4, integral ||dx^2 v||^2 and sup ||v||."""

    w_integral: float = 0.0
    h2_integral: float = 0.0
    v_sup: float = 0.0
    last_t: float | None = None
    last_w_integrand: float = 0.0
    last_h2_integrand: float = 0.0

    def advance(
        self, t: float, dxw_sup: float, v_l2_sq: float, v_h2_sq: float
    ) -> DiagnosticAccumulators:
        w_integrand = 8.0 * dxw_sup**4
        if self.last_t is None:
            w_int, h2_int = 0.0, 0.0
        else:
            dt = t - self.last_t
            w_int = self.w_integral + 0.5 * dt * (self.last_w_integrand + w_integrand)
            h2_int = self.h2_integral + 0.5 * dt * (self.last_h2_integrand + v_h2_sq)
        return DiagnosticAccumulators(
            w_integral=w_int,
            h2_integral=h2_int,
            v_sup=max(self.v_sup, math.sqrt(v_l2_sq)),
            last_t=t,
            last_w_integrand=w_integrand,
            last_h2_integrand=v_h2_sq,
        )

    @property
    def path_norm(self) -> float:
        """||v||_{C(0,T,L2)} + ||v||_{L2(0,T,H2)}."""
        return self.v_sup + math.sqrt(self.h2_integral)


@dataclass(frozen=True, eq=False)
class TrajectoryState:
    t: float
    u: SpectralField
    w_a: ConvolutionState
    rng: WienerState
    step: int = 0
    accumulators: DiagnosticAccumulators = field(default_factory=DiagnosticAccumulators)

    @classmethod
    def initial(
        cls, init: SpectralField, seed: int, w_init: ConvolutionState | None = None
    ) -> TrajectoryState:
        basis = init.basis
        w_a = w_init if w_init is not None else ConvolutionState.zero(basis)
        return cls(t=0.0, u=init, w_a=w_a, rng=WienerState.for_basis(seed, basis))


@dataclass
class DiagnosticTrace:
    """Diagnostics sampled every stride from t = 0, burn-in included."""

    times: list[float] = field(default_factory=list)
    dxw_sup: list[float] = field(default_factory=list)
    v_l2_sq: list[float] = field(default_factory=list)
    v_h2_sq: list[float] = field(default_factory=list)

    def append(self, t: float, dxw_sup: float, v_l2_sq: float, v_h2_sq: float) -> None:
        self.times.append(t)
        self.dxw_sup.append(dxw_sup)
        self.v_l2_sq.append(v_l2_sq)
        self.v_h2_sq.append(v_h2_sq)

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "t": np.asarray(self.times),
            "dxw_sup": np.asarray(self.dxw_sup),
            "v_l2_sq": np.asarray(self.v_l2_sq),
            "v_h2_sq": np.asarray(self.v_h2_sq),
        }

    def last(self) -> dict[str, float]:
        if not self.times:
            return {}
        return {
            "t": self.times[-1],
            "dxw_sup": self.dxw_sup[-1],
            "v_l2_sq": self.v_l2_sq[-1],
            "v_h2_sq": self.v_h2_sq[-1],
        }


@dataclass
class TrajectoryResult:
    series: dict[str, ObservableSeries]
    state: TrajectoryState
    trace: DiagnosticTrace
    seed: int


def phi1(z: np.ndarray | float) -> np.ndarray:
    """(e^z - 1) / z with its Taylor series near 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-5
    safe = np.where(small, 1.0, z)
    series = 1.0 + z / 2.0 + z**2 / 6.0 + z**3 / 24.0
    return np.where(small, series, np.expm1(safe) / safe)


def drift(
    u: SpectralField, model: ModelSpec, nonlinear: bool = True, padding: int | None = None
) -> SpectralField:
    """A u + drift_sign * Pi_N d^2 (d u)^2."""
    linear = SpectralField(u.basis, model.spectrum.eigenvalues * u.coefficients, u.kind)
    if not nonlinear:
        return linear
    return linear + nonlinearity(u, padding) * (-model.drift_sign)


def v_field(state: TrajectoryState, stabilizer: StabilizerProfile | None = None) -> SpectralField:
    v = state.u - state.w_a.field
    if stabilizer is not None:
        v = v - stabilizer.shift_field(state.u.basis)
    return v


class ExponentialEulerStepper:
    """Caches e^{lambda h} and h phi1(lambda h) for one parameter set."""

    def __init__(self, params: SimParams):
        self.params = params
        self.model = params.model
        lam = self.model.spectrum.eigenvalues
        self.decay = np.exp(lam * params.h)
        self.weight = params.h * phi1(lam * params.h)
        self.nonlinear_factor = -float(self.model.drift_sign)

    def step(self, state: TrajectoryState) -> TrajectoryState:
        params = self.params
        u = state.u
        coeffs = self.decay * u.coefficients
        if params.nonlinear:
            b = nonlinearity(u, params.padding)
            coeffs = coeffs + self.weight * self.nonlinear_factor * b.coefficients
        eta = mild_noise_increment(self.model.spectrum, self.model.noise, state.rng, params.h)
        coeffs = coeffs + eta
        w_a = ou_step(
            state.w_a, self.model.spectrum, self.model.noise, state.rng, params.h, increment=eta
        )
        t = state.t + params.h
        new_u = SpectralField(u.basis, coeffs, u.kind)
        self._check_blowup(new_u, t)
        return replace(state, t=t, u=new_u, w_a=w_a, step=state.step + 1)

    def _check_blowup(self, u: SpectralField, t: float) -> None:
        if not u.is_finite():
            raise DivergenceError("Non-finite field", t=t, norm=math.inf)
        size = math.sqrt(l2_squared(u))
        if size > self.params.blowup:
            raise DivergenceError(
                f"||u|| = {size:.3e} exceeds the blow-up threshold", t=t, norm=size
            )


def etd_step(state: TrajectoryState, params: SimParams) -> TrajectoryState:
    return ExponentialEulerStepper(params).step(state)


def record_diagnostics(
    state: TrajectoryState, stabilizer: StabilizerProfile | None, trace: DiagnosticTrace
) -> TrajectoryState:
    v = v_field(state, stabilizer)
    dxw_sup = norm(derivative(state.w_a.field, 1), "Linf")
    v_l2_sq = l2_squared(v)
    v_h2_sq = hs_squared(v, 2.0)
    trace.append(state.t, dxw_sup, v_l2_sq, v_h2_sq)
    accumulators = state.accumulators.advance(state.t, dxw_sup, v_l2_sq, v_h2_sq)
    return replace(state, accumulators=accumulators)


def run_trajectory(
    init: SpectralField,
    params: SimParams,
    probes: ProbeSet | Sequence[str] | None = None,
    seed: int = 0,
    w_init: ConvolutionState | None = None,
) -> TrajectoryResult:
    """Step from t = 0 to T, evaluating probes every stride after burn-in."""
    from .observables import ObservableSeries, ProbeSet

    basis = params.model.basis
    if init.basis != basis:
        raise BasisError(
            "Initial field is not in the model's truncated space",
            {"init": init.basis.to_dict(), "model": basis.to_dict()},
        )
    if isinstance(probes, ProbeSet):
        probe_set = probes
    else:
        probe_set = ProbeSet(probes, params.stabilizer, params.padding)

    stepper = ExponentialEulerStepper(params)
    state = TrajectoryState.initial(init, seed, w_init)
    trace = DiagnosticTrace()
    state = record_diagnostics(state, params.stabilizer, trace)

    times: list[float] = []
    values: dict[str, list[float]] = {name: [] for name in probe_set.names}
    n_total, n_burn, stride = params.total_steps, params.burn_in_steps, params.record_stride
    logger.debug(
        "Trajectory seed=%s: %d steps, burn-in %d, stride %d", seed, n_total, n_burn, stride
    )

    for n in range(1, n_total + 1):
        try:
            state = stepper.step(state)
        except DivergenceError as e:
            e.context.update({"seed": seed, "step": n, "last_diagnostics": trace.last()})
            logger.error("Trajectory seed=%s diverged at t=%.6g: %s", seed, e.t, e.message)
            raise
        if n % stride:
            continue
        state = record_diagnostics(state, params.stabilizer, trace)
        if n > n_burn:
            times.append(state.t)
            for name, value in probe_set.evaluate(state).items():
                values[name].append(value)

    fingerprint = params.model.fingerprint()
    series = {
        name: ObservableSeries(name, np.asarray(times), np.asarray(vals), seed, fingerprint)
        for name, vals in values.items()
    }
    return TrajectoryResult(series=series, state=state, trace=trace, seed=seed)
