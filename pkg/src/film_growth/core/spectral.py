"""
Spectral core: bases, the linear operator A = -d^4 + nu d^2, transforms between
coefficient and physical space, the dealiased Galerkin nonlinearity and norms.

Fields are stored as amplitude coefficients of {cos(q_j x), sin(q_j x)}, j = 1..N.
Periodic fields carry both rows; Neumann fields are cosine series on [0, L],
realized on the even 2L-periodic extension. Odd derivatives of a Neumann field
are sine series (``FieldKind.SINE``) and only make sense on the extended grid.

Norm convention: ||f||^2 = int_0^L f^2 dx = (L/2) * sum(a_j^2 + b_j^2).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import fft as sp_fft
from scipy.integrate import trapezoid

from ..utils.errors import (
    BasisError,
    DerivativeOrderError,
    ModeIndexError,
    NormError,
    ResolutionError,
)

logger = logging.getLogger(__name__)

# Dealiasing padding: default M = PAD_FACTOR * N, minimum 3N + 1
PAD_FACTOR = 4
SUP_OVERSAMPLING = 4
SYMMETRY_TOLERANCE = 1e-9


class BoundaryCondition(str, Enum):
    PERIODIC = "periodic"
    NEUMANN = "neumann"

    @property
    def tag(self) -> int:
        return 0 if self is BoundaryCondition.PERIODIC else 1

    @classmethod
    def from_tag(cls, tag: int) -> BoundaryCondition:
        if tag == 0:
            return cls.PERIODIC
        if tag == 1:
            return cls.NEUMANN
        raise BasisError(f"Unknown basis tag {tag}", {"tag": tag})


class FieldKind(str, Enum):
    """Parity of the stored rows. Periodic fields are always FULL."""

    FULL = "full"
    COSINE = "cosine"
    SINE = "sine"


class NormKind(str, Enum):
    L2 = "L2"
    HS = "Hs"
    LINF = "Linf"
    C1 = "C1"
    L4 = "L4"


@dataclass(frozen=True)
class BasisSpec:
    """Eigenbasis of A on [0, L] truncated to N modes."""

    boundary: BoundaryCondition
    length: float
    truncation: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "boundary", BoundaryCondition(self.boundary))
        if not (self.length > 0 and math.isfinite(self.length)):
            raise BasisError("Domain length must be positive", {"length": self.length})
        if int(self.truncation) != self.truncation or self.truncation < 1:
            raise BasisError("Truncation must be an integer >= 1", {"N": self.truncation})
        object.__setattr__(self, "truncation", int(self.truncation))

    @property
    def period(self) -> float:
        """Period of the grid the basis lives on (2L for the even extension)."""
        if self.boundary is BoundaryCondition.PERIODIC:
            return self.length
        return 2.0 * self.length

    @property
    def rows(self) -> int:
        return 2 if self.boundary is BoundaryCondition.PERIODIC else 1

    @property
    def default_kind(self) -> FieldKind:
        if self.boundary is BoundaryCondition.PERIODIC:
            return FieldKind.FULL
        return FieldKind.COSINE

    @property
    def wavenumbers(self) -> np.ndarray:
        """q_j for j = 1..N."""
        return 2.0 * np.pi * np.arange(1, self.truncation + 1) / self.period

    def with_truncation(self, truncation: int) -> BasisSpec:
        return BasisSpec(self.boundary, self.length, truncation)

    def to_dict(self) -> dict:
        return {
            "boundary": self.boundary.value,
            "length": self.length,
            "truncation": self.truncation,
        }


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Zero-mean field as amplitude coefficients, shape (rows, N)."""

    basis: BasisSpec
    coefficients: np.ndarray
    kind: FieldKind = field(default=FieldKind.FULL)

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coefficients, dtype=float)
        if coeffs.ndim == 1:
            coeffs = coeffs.reshape(1, -1)
        expected = (self.basis.rows, self.basis.truncation)
        if coeffs.shape != expected:
            raise BasisError(
                "Coefficient array does not match basis truncation",
                {"shape": coeffs.shape, "expected": expected},
            )
        kind = FieldKind(self.kind)
        if self.basis.boundary is BoundaryCondition.PERIODIC:
            kind = FieldKind.FULL
        elif kind is FieldKind.FULL:
            kind = FieldKind.COSINE
        coeffs = coeffs.copy()
        coeffs.flags.writeable = False
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "kind", kind)

    def _check_compatible(self, other: SpectralField) -> None:
        if other.basis != self.basis or other.kind is not self.kind:
            raise BasisError(
                "Fields live in different bases",
                {"left": self.basis.to_dict(), "right": other.basis.to_dict()},
            )

    def __add__(self, other: SpectralField) -> SpectralField:
        self._check_compatible(other)
        return SpectralField(self.basis, self.coefficients + other.coefficients, self.kind)

    def __sub__(self, other: SpectralField) -> SpectralField:
        self._check_compatible(other)
        return SpectralField(self.basis, self.coefficients - other.coefficients, self.kind)

    def __mul__(self, scalar: float) -> SpectralField:
        return SpectralField(self.basis, self.coefficients * scalar, self.kind)

    __rmul__ = __mul__

    def __neg__(self) -> SpectralField:
        return self * -1.0

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coefficients)))


@dataclass(frozen=True, eq=False)
class LinearSpectrum:
    """Eigenvalues lambda_j = -q_j^4 - nu q_j^2 of A on the truncated space."""

    basis: BasisSpec
    nu: float
    eigenvalues: np.ndarray

    @property
    def slowest_decay(self) -> float:
        """min_j |lambda_j| over nonzero eigenvalues."""
        nonzero = np.abs(self.eigenvalues[self.eigenvalues != 0.0])
        return float(nonzero.min()) if nonzero.size else 0.0

    @property
    def all_stable(self) -> bool:
        return bool(np.all(self.eigenvalues < 0))


@dataclass(frozen=True, eq=False)
class GridBuffer:
    """Uniform samples over one period of the (possibly extended) domain."""

    samples: np.ndarray
    period: float
    padding: str = "exact"

    @property
    def size(self) -> int:
        return int(self.samples.shape[-1])

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.size) * (self.period / self.size)


@dataclass(frozen=True)
class EigenvalueBounds:
    """Constants with c1 j^4 <= -lambda_j <= c2 j^4 for all j >= j0."""

    c1: float
    c2: float
    j0: int


def symbol(q: float | np.ndarray, nu: float) -> float | np.ndarray:
    """Fourier symbol of A: -q^4 - nu q^2."""
    return -(q**4) - nu * q**2


def _check_index(basis: BasisSpec, j: int) -> None:
    if not (1 <= j <= basis.truncation):
        raise ModeIndexError(
            f"Mode index {j} outside 1..{basis.truncation}", {"j": j, "N": basis.truncation}
        )


def wavenumber(basis: BasisSpec, j: int) -> float:
    _check_index(basis, j)
    return 2.0 * math.pi * j / basis.period


def eigenvalue(basis: BasisSpec, nu: float, j: int) -> float:
    return float(symbol(wavenumber(basis, j), nu))


def linear_spectrum(basis: BasisSpec, nu: float) -> LinearSpectrum:
    return LinearSpectrum(basis=basis, nu=float(nu), eigenvalues=symbol(basis.wavenumbers, nu))


def nu_critical(basis: BasisSpec) -> float:
    """Largest nu at which the first mode is marginal: -q_1^2."""
    q1 = 2.0 * math.pi / basis.period
    return -(q1**2)


def eigenvalue_bounds(basis: BasisSpec, nu: float) -> EigenvalueBounds:
    kappa = 2.0 * math.pi / basis.period
    k4 = kappa**4
    if nu >= 0:
        return EigenvalueBounds(c1=k4, c2=k4 + nu * kappa**2, j0=1)
    # kappa^4 j^4 / 2 >= |nu| kappa^2 j^2 once j >= sqrt(2|nu|) / kappa
    j0 = max(1, math.ceil(math.sqrt(2.0 * abs(nu)) / kappa))
    return EigenvalueBounds(c1=0.5 * k4, c2=k4, j0=j0)


# ---------------------------------------------------------------------------
# construction helpers


def zeros(basis: BasisSpec, kind: FieldKind | None = None) -> SpectralField:
    return SpectralField(
        basis, np.zeros((basis.rows, basis.truncation)), kind or basis.default_kind
    )


def from_amplitudes(
    basis: BasisSpec, cosine: np.ndarray | list[float], sine: np.ndarray | list[float] | None = None
) -> SpectralField:
    """Build a field from cosine (and, for periodic bases, sine) amplitudes.

    Shorter arrays are zero-padded up to N.
    """
    a = np.zeros(basis.truncation)
    cos_values = np.asarray(cosine, dtype=float)
    a[: cos_values.size] = cos_values
    if basis.boundary is BoundaryCondition.NEUMANN:
        if sine is not None and np.any(np.asarray(sine) != 0):
            raise BasisError("Neumann fields have no sine amplitudes")
        return SpectralField(basis, a.reshape(1, -1), FieldKind.COSINE)
    b = np.zeros(basis.truncation)
    if sine is not None:
        sin_values = np.asarray(sine, dtype=float)
        b[: sin_values.size] = sin_values
    return SpectralField(basis, np.vstack([a, b]), FieldKind.FULL)


def smooth_field(basis: BasisSpec, amplitude: float = 0.5) -> SpectralField:
    """Deterministic smooth data a_j = A / j^3 (and b_j = A / (2 j^3) when periodic)."""
    j = np.arange(1, basis.truncation + 1, dtype=float)
    a = amplitude / j**3
    if basis.boundary is BoundaryCondition.PERIODIC:
        return from_amplitudes(basis, a, 0.5 * a)
    return from_amplitudes(basis, a)


def random_field(
    basis: BasisSpec, rng: np.random.Generator, decay: float = 2.0, scale: float = 1.0
) -> SpectralField:
    """Gaussian coefficients with standard deviation scale * j^-decay."""
    j = np.arange(1, basis.truncation + 1, dtype=float)
    coeffs = rng.standard_normal((basis.rows, basis.truncation)) * (scale * j**-decay)
    return SpectralField(basis, coeffs, basis.default_kind)


def resize(f: SpectralField, truncation: int) -> SpectralField:
    """Truncate (Pi_N) or zero-pad a field to a new truncation."""
    new_basis = f.basis.with_truncation(truncation)
    coeffs = np.zeros((new_basis.rows, truncation))
    keep = min(truncation, f.basis.truncation)
    coeffs[:, :keep] = f.coefficients[:, :keep]
    return SpectralField(new_basis, coeffs, f.kind)


# ---------------------------------------------------------------------------
# transforms


def _rows_to_ab(f: SpectralField) -> tuple[np.ndarray, np.ndarray]:
    c = f.coefficients
    if f.kind is FieldKind.FULL:
        return c[0], c[1]
    zero = np.zeros(c.shape[-1])
    if f.kind is FieldKind.COSINE:
        return c[0], zero
    return zero, c[0]


def _ab_to_rows(a: np.ndarray, b: np.ndarray, kind: FieldKind) -> np.ndarray:
    if kind is FieldKind.FULL:
        return np.vstack([a, b])
    if kind is FieldKind.COSINE:
        return a.reshape(1, -1)
    return b.reshape(1, -1)


def minimum_samples(basis: BasisSpec) -> int:
    """Smallest sample count that represents modes 1..N without aliasing."""
    return 2 * basis.truncation + 1


def dealiased_size(basis: BasisSpec, padding: int | None = None) -> int:
    M = PAD_FACTOR * basis.truncation if padding is None else int(padding)
    if M < 3 * basis.truncation + 1:
        raise ResolutionError(
            "Quadratic products need M >= 3N + 1 samples",
            {"M": M, "N": basis.truncation},
        )
    return M


def _synthesize(a: np.ndarray, b: np.ndarray, period: float, M: int) -> np.ndarray:
    """Evaluate sum a_j cos(q_j x) + b_j sin(q_j x) on M points; a, b may be batched."""
    n = a.shape[-1]
    spectrum = np.zeros(a.shape[:-1] + (M // 2 + 1,), dtype=complex)
    spectrum[..., 1 : n + 1] = 0.5 * M * (a - 1j * b)
    return sp_fft.irfft(spectrum, n=M, axis=-1)


def _analyze(samples: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Amplitudes of modes 1..n from samples over one period."""
    M = samples.shape[-1]
    spectrum = sp_fft.rfft(samples, axis=-1)
    modes = spectrum[..., 1 : n + 1] * (2.0 / M)
    return modes.real, -modes.imag


def to_physical(f: SpectralField, M: int) -> GridBuffer:
    if M < minimum_samples(f.basis):
        raise ResolutionError(
            f"{M} samples cannot resolve {f.basis.truncation} modes",
            {"M": M, "required": minimum_samples(f.basis)},
        )
    a, b = _rows_to_ab(f)
    return GridBuffer(_synthesize(a, b, f.basis.period, M), f.basis.period)


def from_physical(g: GridBuffer, basis: BasisSpec) -> SpectralField:
    """Project samples onto modes 1..N (Pi_N), dropping the mean."""
    if not math.isclose(g.period, basis.period, rel_tol=1e-12):
        raise BasisError(
            "Grid period does not match the basis", {"grid": g.period, "basis": basis.period}
        )
    if g.size < minimum_samples(basis):
        raise ResolutionError(
            f"{g.size} samples cannot resolve {basis.truncation} modes",
            {"M": g.size, "required": minimum_samples(basis)},
        )
    samples = np.asarray(g.samples, dtype=float)
    if basis.boundary is BoundaryCondition.NEUMANN:
        mirrored = np.roll(samples[::-1], 1)
        scale = max(1.0, float(np.max(np.abs(samples))))
        asymmetry = float(np.max(np.abs(samples - mirrored)))
        if asymmetry > SYMMETRY_TOLERANCE * scale:
            raise BasisError(
                "Samples are not even about x = 0; not a Neumann field",
                {"asymmetry": asymmetry},
            )
    a, b = _analyze(samples, basis.truncation)
    kind = basis.default_kind
    return SpectralField(basis, _ab_to_rows(a, b, kind), kind)


def derivative(f: SpectralField, order: int) -> SpectralField:
    """Multiply each mode by (i q)^order; odd orders swap Neumann parity."""
    if order not in (1, 2, 3, 4):
        raise DerivativeOrderError(f"Unsupported derivative order {order}", {"order": order})
    a, b = _rows_to_ab(f)
    factor = (1j * f.basis.wavenumbers) ** order
    c = factor * (a - 1j * b)
    new_a, new_b = c.real, -c.imag
    kind = f.kind
    if order % 2 == 1 and kind is not FieldKind.FULL:
        kind = FieldKind.SINE if kind is FieldKind.COSINE else FieldKind.COSINE
    return SpectralField(f.basis, _ab_to_rows(new_a, new_b, kind), kind)


def nonlinearity(u: SpectralField, padding: int | None = None) -> SpectralField:
    """B(u) = -Pi_N d^2 (d u)^2, exact under M >= 3N + 1 padding."""
    basis = u.basis
    M = dealiased_size(basis, padding)
    ux = derivative(u, 1)
    a, b = _rows_to_ab(ux)
    squared = _synthesize(a, b, basis.period, M) ** 2
    wa, wb = _analyze(squared, basis.truncation)
    q2 = basis.wavenumbers**2
    # -d^2 multiplies by +q^2
    kind = basis.default_kind
    return SpectralField(basis, _ab_to_rows(q2 * wa, q2 * wb, kind), kind)


# ---------------------------------------------------------------------------
# norms and inner products


def inner(f: SpectralField, g: SpectralField) -> float:
    """L2(0, L) inner product."""
    f._check_compatible(g)
    return 0.5 * f.basis.length * float(np.sum(f.coefficients * g.coefficients))


def l2_squared(f: SpectralField) -> float:
    return 0.5 * f.basis.length * float(np.sum(f.coefficients**2))


def hs_squared(f: SpectralField, s: float) -> float:
    weights = f.basis.wavenumbers ** (2.0 * s)
    return 0.5 * f.basis.length * float(np.sum(weights * f.coefficients**2))


def sup_grid_size(basis: BasisSpec, oversampling: int = SUP_OVERSAMPLING) -> int:
    return oversampling * 2 * basis.truncation


def _sup(f: SpectralField, oversampling: int) -> float:
    g = to_physical(f, sup_grid_size(f.basis, oversampling))
    return float(np.max(np.abs(g.samples)))


def norm(
    f: SpectralField,
    kind: NormKind | str = NormKind.L2,
    s: float | None = None,
    oversampling: int = SUP_OVERSAMPLING,
) -> float:
    kind = NormKind(kind)
    if kind is NormKind.L2:
        return math.sqrt(l2_squared(f))
    if kind is NormKind.HS:
        if s is None or not (-4.0 <= s <= 4.0):
            raise NormError("Sobolev index must lie in [-4, 4]", {"s": s})
        return math.sqrt(hs_squared(f, s))
    if kind is NormKind.LINF:
        return _sup(f, oversampling)
    if kind is NormKind.C1:
        return _sup(f, oversampling) + _sup(derivative(f, 1), oversampling)
    # L4 on the grid is exact for M > 4N
    g = to_physical(f, sup_grid_size(f.basis, oversampling))
    integral = f.basis.length * float(np.mean(g.samples**4))
    return integral**0.25


def mass(f: SpectralField) -> float:
    """M(u) = int_0^L u dx; identically zero since mode 0 is absent."""
    return 0.0


def quadrature_mass(f: SpectralField, M: int | None = None) -> float:
    """Trapezoid quadrature of the sampled field over [0, L]."""
    M = M or 8 * f.basis.truncation
    g = to_physical(f, M)
    x = g.points
    if f.basis.boundary is BoundaryCondition.PERIODIC:
        samples = np.append(g.samples, g.samples[0])
        x = np.append(x, f.basis.length)
        return float(trapezoid(samples, x))
    half = M // 2
    if M % 2:
        raise ResolutionError("Neumann quadrature needs an even grid", {"M": M})
    return float(trapezoid(g.samples[: half + 1], x[: half + 1]))


def batch_to_physical(
    coefficients: np.ndarray, basis: BasisSpec, kind: FieldKind, M: int
) -> np.ndarray:
    """Synthesize a batch of coefficient arrays, shape (count, rows, N) -> (count, M)."""
    if M < minimum_samples(basis):
        raise ResolutionError(
            f"{M} samples cannot resolve {basis.truncation} modes",
            {"M": M, "required": minimum_samples(basis)},
        )
    coefficients = np.asarray(coefficients, dtype=float)
    if kind is FieldKind.FULL:
        a, b = coefficients[:, 0], coefficients[:, 1]
    elif kind is FieldKind.COSINE:
        a, b = coefficients[:, 0], np.zeros_like(coefficients[:, 0])
    else:
        a, b = np.zeros_like(coefficients[:, 0]), coefficients[:, 0]
    return _synthesize(a, b, basis.period, M)


def batch_derivative(
    coefficients: np.ndarray, basis: BasisSpec, kind: FieldKind
) -> tuple[np.ndarray, FieldKind]:
    """First derivative of a batch of coefficient arrays (count, rows, N)."""
    q = basis.wavenumbers
    coefficients = np.asarray(coefficients, dtype=float)
    if kind is FieldKind.FULL:
        a, b = coefficients[:, 0], coefficients[:, 1]
        return np.stack([q * b, -q * a], axis=1), kind
    if kind is FieldKind.COSINE:
        return -q * coefficients, FieldKind.SINE
    return q * coefficients, FieldKind.COSINE
