"""
Scalar probes of a trajectory state, time series of probe values, and
mergeable ensemble moments.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from ..utils.errors import FingerprintMismatchError, InsufficientDataError
from .spectral import (
    NormKind,
    SpectralField,
    derivative,
    hs_squared,
    inner,
    l2_squared,
    nonlinearity,
    norm,
    quadrature_mass,
)

if TYPE_CHECKING:
    from .integrator import TrajectoryState
    from .stabilizer import StabilizerProfile

logger = logging.getLogger(__name__)

PROBE_NAMES: tuple[str, ...] = (
    "mass",
    "u_l2_sq",
    "dxu_l2_sq",
    "dx2v_l2_sq",
    "u_c1",
    "log1p_u_l2_sq",
    "log1p_u_c1_sq",
    "dxw_sup4",
    "dxw_l4_4",
    "orthogonality_residual",
)

K_EXPONENT = 3.0 / 8.0


def probes(
    state: TrajectoryState,
    stabilizer: StabilizerProfile | None = None,
    names: Iterable[str] | None = None,
    padding: int | None = None,
) -> dict[str, float]:
    """Evaluate the requested probes (all of PROBE_NAMES by default)."""
    from .integrator import v_field

    wanted = tuple(names) if names is not None else PROBE_NAMES
    unknown = set(wanted) - set(PROBE_NAMES)
    if unknown:
        raise KeyError(f"Unknown probes: {sorted(unknown)}")

    u = state.u
    out: dict[str, float] = {}
    u_l2_sq = l2_squared(u)
    c1: float | None = None
    dxw: SpectralField | None = None

    for name in wanted:
        if name == "mass":
            out[name] = quadrature_mass(u)
        elif name == "u_l2_sq":
            out[name] = u_l2_sq
        elif name == "dxu_l2_sq":
            out[name] = hs_squared(u, 1.0)
        elif name == "dx2v_l2_sq":
            out[name] = hs_squared(v_field(state, stabilizer), 2.0)
        elif name in ("u_c1", "log1p_u_c1_sq"):
            if c1 is None:
                c1 = norm(u, NormKind.C1)
            out[name] = c1 if name == "u_c1" else math.log1p(c1**2)
        elif name == "log1p_u_l2_sq":
            out[name] = math.log1p(u_l2_sq)
        elif name in ("dxw_sup4", "dxw_l4_4"):
            if dxw is None:
                dxw = derivative(state.w_a.field, 1)
            kind = NormKind.LINF if name == "dxw_sup4" else NormKind.L4
            out[name] = norm(dxw, kind) ** 4
        elif name == "orthogonality_residual":
            out[name] = inner(u, nonlinearity(u, padding))
    return out


class ProbeSet:
    """A fixed list of probe names bound to a stabilizer and padding."""

    def __init__(
        self,
        names: Sequence[str] | None = None,
        stabilizer: StabilizerProfile | None = None,
        padding: int | None = None,
    ):
        self.names = tuple(names) if names is not None else PROBE_NAMES
        unknown = set(self.names) - set(PROBE_NAMES)
        if unknown:
            raise KeyError(f"Unknown probes: {sorted(unknown)}")
        self.stabilizer = stabilizer
        self.padding = padding

    def evaluate(self, state: TrajectoryState) -> dict[str, float]:
        return probes(state, self.stabilizer, self.names, self.padding)


def energy_drift(u: SpectralField, nu: float) -> float:
    """2 <u, A u>: d/dt ||u||^2 along the noise-off flow (the nonlinear term contributes 0)."""
    q = u.basis.wavenumbers
    lam = -(q**4) - nu * q**2
    return 2.0 * 0.5 * u.basis.length * float(np.sum(lam * u.coefficients**2))


@dataclass(frozen=True, eq=False)
class ObservableSeries:
    probe: str
    times: np.ndarray
    values: np.ndarray
    seed: int
    fingerprint: str
    diverged: bool = False

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape:
            raise InsufficientDataError("Time grid and values differ in length")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise InsufficientDataError("Time grid must be strictly increasing")
        if not self.diverged and not np.all(np.isfinite(values)):
            raise InsufficientDataError(f"Non-finite values in series {self.probe}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.times.size)

    def time_average(self) -> float:
        if not len(self):
            raise InsufficientDataError(f"Series {self.probe} is empty")
        return float(np.mean(self.values))


def series_frame(series: Mapping[str, ObservableSeries]) -> pd.DataFrame:
    """Join probe series recorded on one time grid into a (t, probe...) table."""
    if not series:
        return pd.DataFrame({"t": []})
    first = next(iter(series.values()))
    data = {"t": first.times}
    for name, s in series.items():
        data[name] = s.values
    return pd.DataFrame(data)


@dataclass(frozen=True)
class Moments:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    minimum: float = math.inf
    maximum: float = -math.inf

    @classmethod
    def of(cls, values: Iterable[float]) -> Moments:
        arr = np.asarray(values if isinstance(values, np.ndarray) else list(values), dtype=float)
        if arr.size == 0:
            return cls()
        mean = float(np.mean(arr))
        return cls(
            count=int(arr.size),
            mean=mean,
            m2=float(np.sum((arr - mean) ** 2)),
            minimum=float(arr.min()),
            maximum=float(arr.max()),
        )

    def combine(self, other: Moments) -> Moments:
        """Chan et al. pairwise update; symmetric in its arguments."""
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = (self.count * self.mean + other.count * other.mean) / n
        m2 = (self.m2 + other.m2) + delta * delta * self.count * other.count / n
        low = min(self.minimum, other.minimum)
        high = max(self.maximum, other.maximum)
        return Moments(n, mean, m2, low, high)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else 0.0

    def to_dict(self) -> dict[str, float]:
        return {
            "count": self.count,
            "mean": self.mean,
            "variance": self.variance,
            "std_error": self.std_error,
            "min": self.minimum if self.count else None,
            "max": self.maximum if self.count else None,
        }


@dataclass(frozen=True)
class EnsembleStats:
    fingerprint: str | None = None
    moments: dict[str, Moments] = field(default_factory=dict)

    @classmethod
    def from_samples(
        cls, samples: Mapping[str, Iterable[float]], fingerprint: str | None
    ) -> EnsembleStats:
        return cls(fingerprint, {name: Moments.of(vals) for name, vals in samples.items()})

    @property
    def is_empty(self) -> bool:
        return all(m.count == 0 for m in self.moments.values())

    def __getitem__(self, probe: str) -> Moments:
        return self.moments[probe]

    def to_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "probes": {name: m.to_dict() for name, m in sorted(self.moments.items())},
        }


def merge(a: EnsembleStats, b: EnsembleStats) -> EnsembleStats:
    """Exact pooled moments of two ensembles of the same model and probe set."""
    if a.is_empty:
        return b
    if b.is_empty:
        return a
    if a.fingerprint != b.fingerprint:
        raise FingerprintMismatchError(
            "Cannot merge statistics of different models",
            {"left": a.fingerprint, "right": b.fingerprint},
        )
    if set(a.moments) != set(b.moments):
        raise FingerprintMismatchError(
            "Cannot merge statistics over different probe sets",
            {"left": sorted(a.moments), "right": sorted(b.moments)},
        )
    combined = {name: a.moments[name].combine(b.moments[name]) for name in a.moments}
    return EnsembleStats(a.fingerprint, combined)


@dataclass(frozen=True)
class KWeight:
    """Fourier multiplier (K f)_j = j^exponent f_j."""

    exponent: float = K_EXPONENT

    def weights(self, N: int) -> np.ndarray:
        return np.arange(1, N + 1, dtype=float) ** self.exponent

    def apply(self, f: SpectralField) -> SpectralField:
        return SpectralField(f.basis, f.coefficients * self.weights(f.basis.truncation), f.kind)

    def squared(self) -> KWeight:
        return KWeight(2.0 * self.exponent)


def fit_k_embedding_constant(
    fields: Iterable[SpectralField], weight: KWeight | None = None
) -> float:
    """Smallest C with ||f||_inf <= C ||K f||_4 over the given fields."""
    weight = weight or KWeight()
    ratios = []
    for f in fields:
        denominator = norm(weight.apply(f), NormKind.L4)
        if denominator > 0:
            ratios.append(norm(f, NormKind.LINF) / denominator)
    if not ratios:
        raise InsufficientDataError("No nonzero fields to fit the embedding constant")
    return float(max(ratios))

