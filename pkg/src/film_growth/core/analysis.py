"""
Ensemble experiments: stationary log-moment scan across N and Monte Carlo
verifiers for the stochastic-convolution moment bound and the log inequality.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from functools import reduce

import numpy as np

from ..platform.workers import EnsembleExecutor
from ..utils.errors import (
    DivergenceError,
    InsufficientDataError,
    MomentPreconditionError,
    UnstableModeError,
)
from .integrator import (
    BURN_IN_RELAXATION_TIMES,
    ModelSpec,
    SimParams,
    default_burn_in,
    run_trajectory,
)
from .noise import (
    ConvolutionSampler,
    WienerState,
    derive_seed,
    ou_variance,
    stationary_convolution_sample,
)
from .observables import EnsembleStats, KWeight, Moments, merge
from .spectral import (
    BoundaryCondition,
    FieldKind,
    SUP_OVERSAMPLING,
    batch_derivative,
    batch_to_physical,
    sup_grid_size,
    zeros,
)
from .stabilizer import stabilized_decay_rate

logger = logging.getLogger(__name__)

LOG_PROBES = ("log1p_u_l2_sq", "log1p_u_c1_sq")
SE_RESOLUTION = 3.0
DEFAULT_CHUNK = 2_000
# derive_seed index of the stream that draws the stationary start
STATIONARY_STREAM = 2**31 - 1


# ---------------------------------------------------------------------------
# stationary scan


@dataclass
class ScanEntry:
    truncation: int
    trajectories: int
    means: dict[str, float] = field(default_factory=dict)
    std_errors: dict[str, float] = field(default_factory=dict)
    diverged: bool = False
    message: str | None = None

    def to_dict(self) -> dict:
        return {
            "N": self.truncation,
            "trajectories": self.trajectories,
            "means": self.means,
            "std_errors": self.std_errors,
            "diverged": self.diverged,
            "message": self.message,
        }


@dataclass
class LogMomentReport:
    entries: list[ScanEntry]
    burn_in: float
    horizon: float

    @property
    def n_values(self) -> list[int]:
        return [e.truncation for e in self.entries]

    def _completed(self) -> list[ScanEntry]:
        return sorted((e for e in self.entries if not e.diverged), key=lambda e: e.truncation)

    @property
    def finite(self) -> bool:
        return all(math.isfinite(v) for e in self._completed() for v in e.means.values())

    def growth_flags(self) -> dict[str, bool]:
        """True for a probe whose mean rises by more than 3 SE at every step in N."""
        done = self._completed()
        flags = {}
        for probe in LOG_PROBES:
            steps = [
                (b.means[probe] - a.means[probe])
                > SE_RESOLUTION * math.hypot(a.std_errors[probe], b.std_errors[probe])
                for a, b in zip(done, done[1:], strict=False)
            ]
            flags[probe] = bool(steps) and all(steps)
        return flags

    def agreement(self) -> dict[str, bool]:
        """True when every pair of N agrees within 3 combined SE."""
        done = self._completed()
        result = {}
        for probe in LOG_PROBES:
            result[probe] = all(
                abs(a.means[probe] - b.means[probe])
                <= SE_RESOLUTION * math.hypot(a.std_errors[probe], b.std_errors[probe])
                for i, a in enumerate(done)
                for b in done[i + 1 :]
            )
        return result

    @property
    def n_stable(self) -> bool:
        return (
            self.finite
            and not any(e.diverged for e in self.entries)
            and not any(self.growth_flags().values())
        )

    def to_dict(self) -> dict:
        return {
            "burn_in": self.burn_in,
            "horizon": self.horizon,
            "entries": [e.to_dict() for e in self.entries],
            "growth_flags": self.growth_flags(),
            "agreement": self.agreement(),
            "finite": self.finite,
            "n_stable": self.n_stable,
        }


def _time_averages(
    params: SimParams, seed: int, stationary_start: bool = False
) -> dict[str, list[float]]:
    basis = params.model.basis
    if stationary_start:
        # u(0) = W_A(0) drawn from its stationary law; unstable modes start at 0
        spectrum = params.model.spectrum
        rng = WienerState.for_basis(derive_seed(seed, STATIONARY_STREAM), basis)
        w_init = stationary_convolution_sample(
            spectrum, params.model.noise, rng, opt_out=spectrum.eigenvalues >= 0
        )
        result = run_trajectory(
            w_init.field, params, probes=LOG_PROBES, seed=seed, w_init=w_init
        )
    else:
        result = run_trajectory(zeros(basis), params, probes=LOG_PROBES, seed=seed)
    return {name: [series.time_average()] for name, series in result.series.items()}


def stationary_scan(
    truncations: Sequence[int],
    params: SimParams,
    ensemble: int,
    seed: int = 0,
    executor: EnsembleExecutor | None = None,
    stationary_start: bool = False,
) -> LogMomentReport:
    """Ergodic estimates of E log(1 + ||u||^2) and E log(1 + ||u||_C1^2) for each N.

    With ``stationary_start`` every trajectory begins at a stationary draw of the
    stochastic convolution instead of u = 0.
    """
    executor = executor or EnsembleExecutor()
    if params.burn_in <= 0:
        if params.stabilizer is not None:
            rate = stabilized_decay_rate(params.stabilizer, params.model.basis)
            burn = BURN_IN_RELAXATION_TIMES / rate if rate > 0 else 0.0
        else:
            burn = default_burn_in(params.model.spectrum)
        logger.info("No burn-in configured; using %.4g (ten slowest relaxation times)", burn)
        params = replace(params, burn_in=burn, T=params.T + burn)
    if params.T <= params.burn_in:
        raise InsufficientDataError("Scan horizon must exceed the burn-in", {"T": params.T})

    seeds = [derive_seed(seed, i) for i in range(ensemble)]
    entries = []
    for N in truncations:
        params_n = params.with_model(params.model.with_truncation(N))
        fingerprint = params_n.model.fingerprint()
        logger.info("Phase: N=%d, %d trajectories", N, ensemble)
        try:
            samples = executor.map_ordered(
                lambda s, p=params_n: _time_averages(p, s, stationary_start), seeds
            )
        except DivergenceError as e:
            logger.error("N=%d aborted: %s", N, e.message)
            message = f"{e.message} at t={e.t:.6g}"
            entries.append(ScanEntry(N, ensemble, diverged=True, message=message))
            continue
        stats = reduce(
            merge,
            (EnsembleStats.from_samples(s, fingerprint) for s in samples),
            EnsembleStats(fingerprint),
        )
        entries.append(
            ScanEntry(
                N,
                ensemble,
                means={p: stats[p].mean for p in LOG_PROBES},
                std_errors={p: stats[p].std_error for p in LOG_PROBES},
            )
        )
    return LogMomentReport(entries, params.burn_in, params.T)


# ---------------------------------------------------------------------------
# stochastic convolution moments


def _check_t_grid(t_grid: Sequence[float]) -> list[float]:
    grid = sorted(float(t) for t in t_grid)
    if not grid or grid[0] <= 0 or grid[-1] > 1 or len(set(grid)) != len(grid):
        raise InsufficientDataError(
            "Time grid must hold distinct values in (0, 1]", {"t_grid": list(t_grid)}
        )
    return grid


def _require_stable(model: ModelSpec) -> None:
    if not model.spectrum.all_stable:
        raise UnstableModeError(
            "Moment verifiers need every lambda_j < 0 (use nu >= 0)", {"nu": model.nu}
        )


def _chunks(total: int, chunk: int) -> list[int]:
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


@dataclass
class Lemma61Row:
    truncation: int
    t: float
    estimate: float
    std_error: float
    oversampled_estimate: float
    subsample: int

    @property
    def ratio(self) -> float:
        return self.estimate / self.t**0.125

    def to_dict(self) -> dict:
        return {
            "N": self.truncation,
            "t": self.t,
            "estimate": self.estimate,
            "std_error": self.std_error,
            "ratio": self.ratio,
            "oversampled_estimate": self.oversampled_estimate,
            "oversampling_subsample": self.subsample,
        }


@dataclass
class Lemma61Report:
    rows: list[Lemma61Row]
    samples: int

    def c_hat(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for row in self.rows:
            out[row.truncation] = max(out.get(row.truncation, 0.0), row.ratio)
        return out

    @property
    def variation(self) -> float:
        values = list(self.c_hat().values())
        if not values or min(values) <= 0:
            return math.inf if values and max(values) > 0 else 1.0
        return max(values) / min(values)

    def monotone_small_t(self, t_max: float = 0.1) -> bool:
        """Estimates nondecreasing in t on (0, t_max] up to 3 SE, for every N."""
        for N in self.c_hat():
            selected = (r for r in self.rows if r.truncation == N and r.t <= t_max)
            rows = sorted(selected, key=lambda r: r.t)
            for a, b in zip(rows, rows[1:], strict=False):
                if b.estimate < a.estimate - SE_RESOLUTION * math.hypot(a.std_error, b.std_error):
                    return False
        return True

    @property
    def passed(self) -> bool:
        return all(math.isfinite(c) for c in self.c_hat().values()) and self.variation < 2.0

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "rows": [r.to_dict() for r in self.rows],
            "c_hat": {str(n): c for n, c in self.c_hat().items()},
            "variation": self.variation,
            "monotone_small_t": self.monotone_small_t(),
            "passed": self.passed,
        }


def _sup4(coefficients: np.ndarray, model: ModelSpec, oversampling: int) -> np.ndarray:
    basis = model.basis
    dcoeffs, kind = batch_derivative(coefficients, basis, basis.default_kind)
    grid = batch_to_physical(dcoeffs, basis, kind, sup_grid_size(basis, oversampling))
    return np.max(np.abs(grid), axis=-1) ** 4


def lemma61_experiment(
    model: ModelSpec,
    t_grid: Sequence[float] = (1e-4, 1e-3, 1e-2, 1e-1),
    samples: int = 20_000,
    truncations: Sequence[int] = (32, 64, 128),
    seed: int = 0,
    chunk: int = DEFAULT_CHUNK,
    oversampling_subsample: int = 2_000,
) -> Lemma61Report:
    """Monte Carlo E ||dx W_A^N(t)||_inf^4 on a t grid and an N scan."""
    grid = _check_t_grid(t_grid)
    rows = []
    for N in truncations:
        model_n = model.with_truncation(N)
        _require_stable(model_n)
        sampler = ConvolutionSampler(model_n.spectrum, model_n.noise, derive_seed(seed, N))
        for t in grid:
            moments = Moments()
            fine_moments = Moments()
            for size in _chunks(samples, chunk):
                coeffs = sampler.sample(t, size)
                moments = moments.combine(Moments.of(_sup4(coeffs, model_n, SUP_OVERSAMPLING)))
                remaining = oversampling_subsample - fine_moments.count
                if remaining > 0:
                    fine = _sup4(coeffs[:remaining], model_n, 2 * SUP_OVERSAMPLING)
                    fine_moments = fine_moments.combine(Moments.of(fine))
            rows.append(
                Lemma61Row(
                    N, t, moments.mean, moments.std_error, fine_moments.mean, fine_moments.count
                )
            )
            logger.debug(
                "N=%d t=%.1e: E sup^4 = %.4e +- %.1e", N, t, moments.mean, moments.std_error
            )
    return Lemma61Report(rows, samples)


@dataclass
class KWeightReport:
    t: float
    x: float
    fourth_moment: float
    fourth_moment_se: float
    pointwise_variance: float
    pointwise_variance_se: float
    variance_oracle: float

    @property
    def fourth_ratio(self) -> float:
        return self.fourth_moment / self.t**0.125

    @property
    def variance_ratio(self) -> float:
        return self.pointwise_variance / self.t**0.0625

    @property
    def oracle_within_3se(self) -> bool:
        return abs(self.pointwise_variance - self.variance_oracle) <= SE_RESOLUTION * max(
            self.pointwise_variance_se, 1e-300
        )

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "x": self.x,
            "fourth_moment": self.fourth_moment,
            "fourth_moment_se": self.fourth_moment_se,
            "fourth_ratio": self.fourth_ratio,
            "pointwise_variance": self.pointwise_variance,
            "pointwise_variance_se": self.pointwise_variance_se,
            "variance_oracle": self.variance_oracle,
            "variance_ratio": self.variance_ratio,
            "oracle_within_3se": self.oracle_within_3se,
        }


def k_weight_variance_oracle(
    model: ModelSpec, t: float, x: float, weight: KWeight | None = None
) -> float:
    """sum_j alpha_j^2 |K dx e_j(x)|^2 (1 - e^{2 lambda_j t}) / (2 |lambda_j|)."""
    weight = weight or KWeight()
    basis = model.basis
    q = basis.wavenumbers
    w2 = weight.weights(basis.truncation) ** 2
    if basis.boundary is BoundaryCondition.PERIODIC:
        shape = np.ones_like(q)
    else:
        shape = np.sin(q * x) ** 2
    variance = ou_variance(model.spectrum.eigenvalues, model.noise.alphas, t)
    return float(np.sum(variance * w2 * q**2 * (2.0 / basis.length) * shape))


def k_weight_moment(
    t: float,
    samples: int,
    model: ModelSpec,
    x: float | None = None,
    seed: int = 0,
    chunk: int = DEFAULT_CHUNK,
    weight: KWeight | None = None,
) -> KWeightReport:
    """Monte Carlo E ||K dx W_A(t)||_4^4 and Var (K dx W_A)(t, x)."""
    _check_t_grid([t])
    _require_stable(model)
    weight = weight or KWeight()
    basis = model.basis
    x = basis.length / 3.0 if x is None else x
    sampler = ConvolutionSampler(model.spectrum, model.noise, derive_seed(seed, basis.truncation))
    w = weight.weights(basis.truncation)
    q = basis.wavenumbers
    M = sup_grid_size(basis)

    fourth = Moments()
    point = Moments()
    for size in _chunks(samples, chunk):
        coeffs = sampler.sample(t, size)
        dcoeffs, kind = batch_derivative(coeffs, basis, basis.default_kind)
        kd = dcoeffs * w
        grid = batch_to_physical(kd, basis, kind, M)
        fourth = fourth.combine(Moments.of(basis.length * np.mean(grid**4, axis=-1)))
        if kind is FieldKind.FULL:
            values = kd[:, 0] @ np.cos(q * x) + kd[:, 1] @ np.sin(q * x)
        elif kind is FieldKind.COSINE:
            values = kd[:, 0] @ np.cos(q * x)
        else:
            values = kd[:, 0] @ np.sin(q * x)
        # the field is centred, so E X^2 is its variance
        point = point.combine(Moments.of(values**2))
    return KWeightReport(
        t=t,
        x=x,
        fourth_moment=fourth.mean,
        fourth_moment_se=fourth.std_error,
        pointwise_variance=point.mean,
        pointwise_variance_se=point.std_error,
        variance_oracle=k_weight_variance_oracle(model, t, x, weight),
    )


# ---------------------------------------------------------------------------
# log inequality


PairSampler = Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]]


def gaussian_pair_sampler(K: float, correlation: float = 0.0) -> PairSampler:
    """Centred Gaussian (W1, W2) with Var W1 = Var W2 = K/2, so E(W1^2 + W2^2) = K."""
    std = math.sqrt(K / 2.0)

    def sample(rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
        z1 = rng.standard_normal(count)
        z2 = rng.standard_normal(count)
        w1 = std * z1
        w2 = std * (correlation * z1 + math.sqrt(1.0 - correlation**2) * z2)
        return w1, w2

    return sample


def constant_pair_sampler(w1: float, w2: float) -> PairSampler:
    def sample(rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
        return np.full(count, w1), np.full(count, w2)

    return sample


@dataclass
class Lemma62Constant:
    K: float
    eps: float
    eps_prime: float
    log_x0: float
    e1: float

    @property
    def quadratic_part(self) -> float:
        return 6.0 * self.K + 2.0

    @property
    def transition_part(self) -> float:
        return 2.0 * self.log_x0 * max(0.0, self.e1 - self.eps)

    @property
    def value(self) -> float:
        return self.quadratic_part + self.transition_part

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "eps": self.eps,
            "eps_prime": self.eps_prime,
            "log_x0": self.log_x0,
            "e1": self.e1,
            "quadratic_part": self.quadratic_part,
            "transition_part": self.transition_part,
            "C": self.value,
        }


def lemma62_constant(K: float, eps: float, e1: float) -> Lemma62Constant:
    """Explicit C(eps, K).

    For x >= x0 = e^{1 + 2K/eps'} / eps' the excess term E log(1 + e^{W2 - W1}/x) stays
    below eps' (2 + log(1 + eps')) <= eps with eps' = eps / (2 + log(1 + eps)). Below x0 the
    excess is at most e1 = E log(1 + e^{|W2 - W1|}), which costs 2 log(x0) (e1 - eps).
    """
    eps_prime = eps / (2.0 + math.log1p(eps))
    log_x0 = 1.0 + 2.0 * K / eps_prime - math.log(eps_prime)
    return Lemma62Constant(K=K, eps=eps, eps_prime=eps_prime, log_x0=log_x0, e1=e1)


@dataclass
class Lemma62Row:
    x: float
    lhs: float
    lhs_se: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.margin >= -SE_RESOLUTION * self.lhs_se

    def to_dict(self) -> dict:
        return {
            "x": self.x,
            "lhs": self.lhs,
            "lhs_se": self.lhs_se,
            "rhs": self.rhs,
            "margin": self.margin,
            "passed": self.passed,
        }


@dataclass
class Lemma62Report:
    rows: list[Lemma62Row]
    constant: Lemma62Constant
    second_moment: float
    mean_w1: float
    samples: int

    @property
    def min_margin(self) -> float:
        return min(r.margin for r in self.rows)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "constant": self.constant.to_dict(),
            "second_moment": self.second_moment,
            "mean_w1": self.mean_w1,
            "samples": self.samples,
            "min_margin": self.min_margin,
            "passed": self.passed,
        }


def lemma62_check(
    x_grid: Sequence[float],
    sampler: PairSampler,
    K: float,
    eps: float = 0.1,
    samples: int = 1_000_000,
    seed: int = 0,
    chunk: int = 250_000,
) -> Lemma62Report:
    """Compare E(log(x e^{W1} + e^{W2}))^2 with (log x)^2 + 2(eps + E W1) log x + C."""
    xs = [float(x) for x in x_grid]
    if not xs or min(xs) < 1.0:
        raise InsufficientDataError("x grid must be non-empty with every x >= 1", {"x_grid": xs})
    log_x = np.log(xs)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 62]))

    lhs = [Moments() for _ in xs]
    w1_moments = Moments()
    second = Moments()
    excess = Moments()
    for size in _chunks(samples, chunk):
        w1, w2 = sampler(rng, size)
        w1_moments = w1_moments.combine(Moments.of(w1))
        second = second.combine(Moments.of(w1**2 + w2**2))
        excess = excess.combine(Moments.of(np.logaddexp(0.0, np.abs(w2 - w1))))
        for i, lx in enumerate(log_x):
            lhs[i] = lhs[i].combine(Moments.of(np.logaddexp(lx + w1, w2) ** 2))

    if second.mean - SE_RESOLUTION * second.std_error > K:
        raise MomentPreconditionError(
            "Sampled E(W1^2 + W2^2) exceeds K",
            {"estimate": second.mean, "std_error": second.std_error, "K": K},
        )
    constant = lemma62_constant(K, eps, excess.mean)
    rows = []
    for x, lx, m in zip(xs, log_x, lhs, strict=True):
        rhs = lx**2 + 2.0 * (eps + w1_moments.mean) * lx + constant.value
        se = math.hypot(m.std_error, 2.0 * lx * w1_moments.std_error)
        rows.append(Lemma62Row(x=x, lhs=m.mean, lhs_se=se, rhs=float(rhs)))
    return Lemma62Report(rows, constant, second.mean, w1_moments.mean, samples)
