"""
Stabilizer for the linearly unstable case nu < nu_c.

The shift profile is

    Phi(x) = 2 |nu| sum_{n <= 2 n*} phi_n cos(2 pi n x / L),   phi_n = psi_n / n^2,  psi_n = 2,

its smallness certificate is the double sum

    Gamma = sum_{k > m > 0} |psi_{k+m} - psi_{k-m}|^2 / (E_k E_m),

with E_n = alpha n^2 and alpha = 2 pi^2 / L^2,

and positivity of H_Phi = -1/2 d^2 + Phi'' (Dirichlet on [0, L]) is checked by a sine-spectral
eigen-solve. Test fields for the quadratic form of A~ are Neumann cosine series.

The evolution is shifted by drift_sign * Phi_N, so that u = v + W_A + drift_sign * Phi_N and
<v, drift(v + shift) - drift(shift)> is the quadratic form of A~ for either drift sign.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..utils.errors import StabilizerError, StabilizerNotNeededError
from .spectral import (
    BasisSpec,
    BoundaryCondition,
    SpectralField,
    nu_critical,
)

logger = logging.getLogger(__name__)

DEFAULT_GRID = 512
MIN_GRID = 64
EIGEN_MARGIN = 0.05
DEFAULT_M_MAX_FLOOR = 10_000
MAX_N_STAR = 2**20


@dataclass(frozen=True)
class GammaCertificate:
    n_star: int
    length: float
    alpha: float
    m_max: int
    computed_sum: float
    tail_bound: float
    closed_form_bound: float

    @property
    def upper(self) -> float:
        return self.computed_sum + self.tail_bound

    @property
    def holds(self) -> bool:
        return self.upper <= self.closed_form_bound

    def to_dict(self) -> dict:
        return {
            "n_star": self.n_star,
            "length": self.length,
            "alpha": self.alpha,
            "m_max": self.m_max,
            "computed_sum": self.computed_sum,
            "tail_bound": self.tail_bound,
            "upper": self.upper,
            "closed_form_bound": self.closed_form_bound,
            "holds": self.holds,
        }


@dataclass(frozen=True, eq=False)
class StabilizerProfile:
    n_star: int
    nu: float
    length: float
    psi: np.ndarray
    phi_coeffs: np.ndarray
    Phi: SpectralField
    truncation_residual: float
    drift_sign: int = -1

    @classmethod
    def null(
        cls, nu: float, length: float, basis: BasisSpec, drift_sign: int = -1
    ) -> StabilizerProfile:
        """Phi = 0, the control that must fail the negativity check when nu < nu_c."""
        empty = np.zeros(0)
        phi = SpectralField(basis, np.zeros((basis.rows, basis.truncation)))
        return cls(0, nu, length, empty, empty, phi, 0.0, drift_sign)

    def phi_field(self, basis: BasisSpec) -> SpectralField:
        """Phi_N in ``basis`` (recomputed when the truncation differs)."""
        if basis == self.Phi.basis:
            return self.Phi
        field, _ = _phi_in_basis(self.phi_coeffs, self.nu, basis)
        return field

    def shift_field(self, basis: BasisSpec) -> SpectralField:
        """drift_sign * Phi_N, the part of u - W_A that is not v."""
        return self.phi_field(basis) * float(self.drift_sign)

    def potential_coefficients(self, size: int) -> np.ndarray:
        """V_p, the cos(p pi x / L) coefficients of Phi'' for p = 0..size-1."""
        V = np.zeros(size)
        if self.n_star == 0:
            return V
        n = np.arange(1, self.psi.size + 1)
        p = 2 * n
        keep = p < size
        V[p[keep]] = -2.0 * abs(self.nu) * self.psi[keep] * (2.0 * math.pi / self.length) ** 2
        return V

    def to_dict(self) -> dict:
        return {
            "n_star": self.n_star,
            "nu": self.nu,
            "length": self.length,
            "truncation": self.Phi.basis.truncation,
            "truncation_residual": self.truncation_residual,
            "drift_sign": self.drift_sign,
        }


def _phi_in_basis(
    phi_coeffs: np.ndarray, nu: float, basis: BasisSpec
) -> tuple[SpectralField, float]:
    """Project Phi onto ``basis``; returns (Phi_N, L2 norm of the dropped part)."""
    n = np.arange(1, phi_coeffs.size + 1)
    amplitudes = 2.0 * abs(nu) * phi_coeffs
    # cos(2 pi n x / L) is mode n of a periodic basis and mode 2n of the Neumann basis
    index = n if basis.boundary is BoundaryCondition.PERIODIC else 2 * n
    coeffs = np.zeros((basis.rows, basis.truncation))
    inside = index <= basis.truncation
    coeffs[0, index[inside] - 1] = amplitudes[inside]
    residual = math.sqrt(0.5 * basis.length * float(np.sum(amplitudes[~inside] ** 2)))
    return SpectralField(basis, coeffs), residual


def build_phi(
    n_star: int,
    nu: float,
    L: float,
    N: int,
    boundary: BoundaryCondition | str = BoundaryCondition.NEUMANN,
    drift_sign: int = -1,
) -> StabilizerProfile:
    if nu >= 0:
        raise StabilizerNotNeededError(
            "No stabilizer is needed for nu >= 0", {"nu": nu}
        )
    if n_star < 1:
        raise StabilizerError("n_star must be >= 1", {"n_star": n_star})
    if drift_sign not in (-1, 1):
        raise StabilizerError("drift_sign must be -1 or +1", {"drift_sign": drift_sign})
    basis = BasisSpec(BoundaryCondition(boundary), L, N)
    if nu > nu_critical(basis):
        logger.warning(
            "nu=%g lies above nu_c=%g: every linear mode is already stable", nu, nu_critical(basis)
        )
    psi = np.full(2 * n_star, 2.0)
    phi_coeffs = psi / np.arange(1, 2 * n_star + 1) ** 2
    Phi, residual = _phi_in_basis(phi_coeffs, nu, basis)
    if residual > 0:
        logger.info("Phi truncated at N=%d: dropped L2 mass %.3e", N, residual)
    return StabilizerProfile(
        n_star=n_star,
        nu=nu,
        length=L,
        psi=psi,
        phi_coeffs=phi_coeffs,
        Phi=Phi,
        truncation_residual=residual,
        drift_sign=drift_sign,
    )


def gamma_alpha(L: float) -> float:
    return 2.0 * math.pi**2 / L**2


def gamma_sum(n_star: int, L: float, m_max: int | None = None) -> GammaCertificate:
    """Sum the nonzero terms 4 / (alpha^2 k^2 m^2), k - m <= 2n* < k + m, for m <= m_max."""
    if n_star < 1:
        raise StabilizerError("n_star must be >= 1", {"n_star": n_star})
    if m_max is None:
        m_max = max(8 * n_star, DEFAULT_M_MAX_FLOOR)
    if m_max < 4 * n_star:
        raise StabilizerError("m_max must be >= 4 n*", {"m_max": m_max, "n_star": n_star})
    alpha = gamma_alpha(L)
    width = 2 * n_star

    k_top = m_max + width
    inv_sq = 1.0 / np.arange(1, k_top + 1, dtype=float) ** 2
    # cumulative[k] = sum_{i <= k} 1 / i^2, cumulative[0] = 0
    cumulative = np.concatenate([[0.0], np.cumsum(inv_sq)])

    m = np.arange(1, m_max + 1)
    k_lo = np.maximum(m + 1, width - m + 1)
    k_hi = m + width
    inner_sums = cumulative[k_hi] - cumulative[k_lo - 1]
    computed = 4.0 / alpha**2 * float(np.sum(inner_sums / m.astype(float) ** 2))
    tail = 32.0 * n_star / (3.0 * alpha**2 * float(m_max) ** 3)
    closed_form_bound = 4.0 * math.pi**2 / (3.0 * alpha**2 * n_star)
    return GammaCertificate(
        n_star=n_star,
        length=L,
        alpha=alpha,
        m_max=m_max,
        computed_sum=computed,
        tail_bound=tail,
        closed_form_bound=closed_form_bound,
    )


@dataclass(frozen=True)
class HphiEigenvalue:
    """Smallest eigenvalue of H_Phi at M and 2M sine modes."""

    value: float
    refined: float
    grid: int

    @property
    def error_estimate(self) -> float:
        return abs(self.refined - self.value)

    @property
    def relative_drift(self) -> float:
        return self.error_estimate / max(abs(self.refined), 1e-300)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "refined": self.refined,
            "grid": self.grid,
            "error_estimate": self.error_estimate,
            "relative_drift": self.relative_drift,
        }


def _hphi_matrix(profile: StabilizerProfile, M: int) -> np.ndarray:
    m = np.arange(1, M + 1)
    V = profile.potential_coefficients(2 * M + 1)
    diff = np.abs(m[:, None] - m[None, :])
    total = m[:, None] + m[None, :]
    H = 0.5 * (V[diff] - V[total])
    H[np.diag_indices(M)] += 0.5 * (m * math.pi / profile.length) ** 2
    return H


def _smallest_eigenvalue(H: np.ndarray) -> float:
    try:
        values = linalg.eigh(H, eigvals_only=True, subset_by_index=[0, 0])
    except linalg.LinAlgError as e:
        raise StabilizerError(f"Eigen-solver failed: {e}") from e
    return float(values[0])


def hphi_min_eigenvalue(profile: StabilizerProfile, M: int = DEFAULT_GRID) -> HphiEigenvalue:
    if M < MIN_GRID:
        raise StabilizerError(f"Grid must have at least {MIN_GRID} sine modes", {"M": M})
    coarse = _smallest_eigenvalue(_hphi_matrix(profile, M))
    fine = _smallest_eigenvalue(_hphi_matrix(profile, 2 * M))
    return HphiEigenvalue(value=coarse, refined=fine, grid=M)


def select_n_star(
    L: float,
    target_c: float,
    nu: float | None = None,
    gamma_max: float | None = None,
    grid: int = DEFAULT_GRID,
) -> int:
    """Smallest n* whose certified Gamma is below gamma_max, validated on H_Phi when nu is given.

    The default threshold 0.1 alpha^-2 min(1, alpha / C)^2 tightens as the target C grows.
    With ``nu`` set, n* is doubled until the discretized min eigenvalue of H_Phi reaches
    max(C, (1 + 0.05) |nu|).
    """
    if not target_c > 0:
        raise StabilizerError("Target constant must be positive", {"target_c": target_c})
    alpha = gamma_alpha(L)
    if gamma_max is None:
        gamma_max = 0.1 / alpha**2 * min(1.0, alpha / target_c) ** 2

    def certified(n: int) -> bool:
        return gamma_sum(n, L).upper <= gamma_max

    # exponential search, then bisection on the monotone certified bound
    hi = 1
    while not certified(hi):
        hi *= 2
        if hi > MAX_N_STAR:
            raise StabilizerError(
                "No n* <= 2^20 satisfies the Gamma threshold", {"gamma_max": gamma_max, "L": L}
            )
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if certified(mid):
            hi = mid
        else:
            lo = mid
    n_star = hi
    logger.info("Gamma threshold %.4g met at n*=%d", gamma_max, n_star)

    if nu is None:
        return n_star

    floor = max(target_c, (1.0 + EIGEN_MARGIN) * abs(nu))
    while True:
        if 4 * n_star > grid // 2:
            raise StabilizerError(
                "H_Phi grid too coarse for the required n*", {"n_star": n_star, "grid": grid}
            )
        profile = build_phi(n_star, nu, L, 4 * n_star)
        eig = hphi_min_eigenvalue(profile, grid)
        logger.debug("n*=%d: min eigenvalue of H_Phi %.6g (floor %.6g)", n_star, eig.refined, floor)
        if eig.refined >= floor:
            return n_star
        n_star *= 2


@dataclass(frozen=True)
class FormCheckReport:
    min_ratio: float
    random_min: float
    single_mode_min: float
    pair_min: float
    exact_min: float
    samples: int
    truncation: int

    @property
    def passed(self) -> bool:
        return self.min_ratio > 0

    def to_dict(self) -> dict:
        return {
            "min_ratio": self.min_ratio,
            "random_min": self.random_min,
            "single_mode_min": self.single_mode_min,
            "pair_min": self.pair_min,
            "exact_min": self.exact_min,
            "samples": self.samples,
            "truncation": self.truncation,
            "passed": self.passed,
        }


def _form_matrices(profile: StabilizerProfile, N: int) -> tuple[np.ndarray, np.ndarray]:
    """(numerator, denominator) of R(v) in Neumann cosine amplitudes, factor L/2 dropped."""
    q = math.pi * np.arange(1, N + 1) / profile.length
    V = profile.potential_coefficients(2 * N + 1)
    j = np.arange(1, N + 1)
    G = 0.5 * (V[np.abs(j[:, None] - j[None, :])] - V[j[:, None] + j[None, :]])
    numerator = q[:, None] * G * q[None, :]
    numerator[np.diag_indices(N)] += q**4 + profile.nu * q**2
    denominator = np.diag(q**4)
    return numerator, denominator


def _exact_min_ratio(numerator: np.ndarray, denominator: np.ndarray) -> float:
    try:
        lowest = linalg.eigh(numerator, denominator, eigvals_only=True, subset_by_index=[0, 0])
    except linalg.LinAlgError as e:
        raise StabilizerError(f"Generalized eigen-solve failed: {e}") from e
    return float(lowest[0])


def stabilized_decay_rate(profile: StabilizerProfile, basis: BasisSpec) -> float:
    """c (pi / L)^4 with c the exact minimum of R(v) on ``basis``; 0 when c <= 0.

    <v, A~ v> <= -c ||v''||^2 <= -c (pi / L)^4 ||v||^2 for zero-mean Neumann fields.
    """
    if basis.boundary is not BoundaryCondition.NEUMANN:
        raise StabilizerError("The stabilized form is defined on Neumann fields")
    c = _exact_min_ratio(*_form_matrices(profile, basis.truncation))
    return max(c, 0.0) * (math.pi / basis.length) ** 4


def tilde_a_form_check(
    profile: StabilizerProfile, samples: int = 10_000, N: int | None = None, seed: int = 0
) -> FormCheckReport:
    """Minimum of (||v''||^2 + nu ||v'||^2 + <v', Phi'' v'>) / ||v''||^2 over Neumann fields."""
    if N is None:
        N = max(64, 8 * profile.n_star)
    numerator, denominator = _form_matrices(profile, N)
    d4 = np.diag(denominator)

    rng = np.random.default_rng(np.random.SeedSequence([seed, N]))
    decay = np.arange(1, N + 1, dtype=float) ** -2.0
    a = rng.standard_normal((samples, N)) * decay
    den = np.einsum("sj,j,sj->s", a, d4, a)
    if np.any(den <= 0):
        raise StabilizerError("Degenerate test field with ||v''|| = 0")
    num = np.einsum("si,ij,sj->s", a, numerator, a)
    random_min = float(np.min(num / den))

    single_min = float(np.min(np.diag(numerator) / d4))

    # 2x2 generalized Rayleigh quotient minimum for every pair (i, j)
    i, k = np.triu_indices(N, 1)
    a11 = numerator[i, i] / d4[i]
    a22 = numerator[k, k] / d4[k]
    a12 = numerator[i, k] / np.sqrt(d4[i] * d4[k])
    pair_min = single_min
    if i.size:
        pair_min = float(np.min(0.5 * (a11 + a22) - np.sqrt(0.25 * (a11 - a22) ** 2 + a12**2)))

    exact = _exact_min_ratio(numerator, denominator)

    min_ratio = min(random_min, single_min, pair_min, exact)
    logger.info(
        "A~ form check (N=%d): random %.4g, single %.4g, pair %.4g, exact %.4g",
        N, random_min, single_min, pair_min, exact,
    )
    return FormCheckReport(
        min_ratio=min_ratio,
        random_min=random_min,
        single_mode_min=single_min,
        pair_min=pair_min,
        exact_min=exact,
        samples=samples,
        truncation=N,
    )


def tilde_a_quadratic_form(profile: StabilizerProfile, v: SpectralField) -> float:
    """<v, A~ v> = -(||v''||^2 + nu ||v'||^2 + <v', Phi'' v'>) for a Neumann field v."""
    if v.basis.boundary is not BoundaryCondition.NEUMANN:
        raise StabilizerError("The quadratic form is evaluated on Neumann fields")
    if not math.isclose(v.basis.length, profile.length):
        raise StabilizerError("Field and profile live on different domains")
    numerator, _ = _form_matrices(profile, v.basis.truncation)
    a = v.coefficients[0]
    return -0.5 * v.basis.length * float(a @ numerator @ a)
