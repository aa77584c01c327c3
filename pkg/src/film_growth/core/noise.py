"""
Cylindrical Q-Wiener forcing and the stochastic convolution W_A.

Noise amplitudes alpha_j refer to the L2-orthonormal eigenbasis
e_j = sqrt(2/L) cos(q_j x) (and its sine partner), so a unit increment of the
j-th Brownian motion moves the amplitude coefficient by sqrt(2/L) * alpha_j.

Randomness is counter-based: every (row, mode) pair owns a Philox stream keyed by
(seed, row, j). Mode j sees the same normals whatever N, thread count or
traversal order, which is what the Galerkin refinement check relies on.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..utils.errors import ConfigError, StepSizeError, UnstableModeError
from .spectral import BasisSpec, LinearSpectrum, SpectralField, zeros

logger = logging.getLogger(__name__)

SERIES_THRESHOLD = 1e-8
STREAM_CHUNK = 1024


@dataclass(frozen=True, eq=False)
class NoiseSpectrum:
    """Per-mode noise amplitudes alpha_j <= bound."""

    alphas: np.ndarray
    bound: float
    kind: str = "array"
    c: float = 1.0
    p: float = 0.0

    def __post_init__(self) -> None:
        alphas = np.asarray(self.alphas, dtype=float).copy()
        if alphas.ndim != 1 or alphas.size == 0:
            raise ConfigError("Noise spectrum must be a non-empty 1-d array")
        if np.any(~np.isfinite(alphas)) or np.any(alphas < 0):
            raise ConfigError("Noise amplitudes must be finite and nonnegative")
        if np.any(alphas > self.bound):
            raise ConfigError(
                "Noise amplitude exceeds its declared bound",
                context={"max_alpha": float(alphas.max()), "bound": self.bound},
            )
        alphas.flags.writeable = False
        object.__setattr__(self, "alphas", alphas)

    @classmethod
    def white(cls, N: int) -> NoiseSpectrum:
        return cls(np.ones(N), bound=1.0, kind="white")

    @classmethod
    def zero(cls, N: int) -> NoiseSpectrum:
        return cls(np.zeros(N), bound=0.0, kind="zero")

    @classmethod
    def from_values(
        cls, values: list[float] | np.ndarray, bound: float | None = None
    ) -> NoiseSpectrum:
        alphas = np.asarray(values, dtype=float)
        return cls(alphas, bound=float(alphas.max()) if bound is None else bound, kind="array")

    @classmethod
    def power_law(cls, c: float, p: float, N: int) -> NoiseSpectrum:
        """alpha_j = c * j^-p; only p >= 0 gives a bounded spectrum."""
        if p < 0:
            raise ConfigError("Growing spectra (p < 0) are not supported", context={"p": p})
        j = np.arange(1, N + 1, dtype=float)
        return cls(c * j**-p, bound=abs(c), kind="power_law", c=c, p=p)

    @property
    def size(self) -> int:
        return int(self.alphas.size)

    def resized(self, N: int) -> NoiseSpectrum:
        """Same spectrum rule at a different truncation."""
        if self.kind == "white":
            return NoiseSpectrum.white(N)
        if self.kind == "zero":
            return NoiseSpectrum.zero(N)
        if self.kind == "power_law":
            return NoiseSpectrum.power_law(self.c, self.p, N)
        if N > self.size:
            raise ConfigError(
                "Explicit noise array is shorter than the requested truncation",
                context={"values": self.size, "N": N},
            )
        return NoiseSpectrum(self.alphas[:N], bound=self.bound, kind="array")

    def to_dict(self) -> dict:
        data: dict = {"kind": self.kind, "bound": self.bound}
        if self.kind == "power_law":
            data.update({"c": self.c, "p": self.p})
        elif self.kind == "array":
            data["values"] = [float(a) for a in self.alphas]
        return data


def derive_seed(master: int, index: int) -> int:
    """Seed of the index-th trajectory of an ensemble."""
    state = np.random.SeedSequence([int(master), int(index)]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def _mode_generator(seed: int, row: int, mode: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, row, mode])))


class WienerState:
    """Per-mode counter-based Brownian increments for one trajectory.

    Normals are drawn in chunks per (row, mode) stream; the k-th call to
    :meth:`normals` returns the k-th normal of every stream.
    """

    def __init__(self, seed: int, rows: int, N: int, t: float = 0.0, chunk: int = STREAM_CHUNK):
        self.seed = int(seed)
        self.rows = rows
        self.N = N
        self.t = t
        self.draws = 0
        self.chunk = chunk
        self._generators = [
            [_mode_generator(self.seed, r, j) for j in range(1, N + 1)] for r in range(rows)
        ]
        self._buffer = np.empty((rows, N, chunk))
        self._cursor = chunk

    @classmethod
    def for_basis(cls, seed: int, basis: BasisSpec, t: float = 0.0) -> WienerState:
        return cls(seed, basis.rows, basis.truncation, t=t)

    @classmethod
    def resume(cls, seed: int, basis: BasisSpec, draws: int, t: float) -> WienerState:
        """Rebuild a stream positioned after ``draws`` increments."""
        state = cls.for_basis(seed, basis, t=t)
        while draws > 0:
            state._refill()
            used = min(draws, state.chunk)
            state._cursor = used
            state.draws += used
            draws -= used
        return state

    def _refill(self) -> None:
        for r, row in enumerate(self._generators):
            for j, gen in enumerate(row):
                self._buffer[r, j] = gen.standard_normal(self.chunk)
        self._cursor = 0

    def normals(self) -> np.ndarray:
        """Next standard normal of every stream, shape (rows, N)."""
        if self._cursor >= self.chunk:
            self._refill()
        out = self._buffer[:, :, self._cursor].copy()
        self._cursor += 1
        self.draws += 1
        return out

    def snapshot(self) -> dict:
        return {"seed": self.seed, "draws": self.draws, "t": self.t}


@dataclass(frozen=True, eq=False)
class ConvolutionState:
    """Stochastic convolution W_A^N at time t."""

    field: SpectralField
    t: float = 0.0

    @classmethod
    def zero(cls, basis: BasisSpec, t: float = 0.0) -> ConvolutionState:
        return cls(zeros(basis), t)

    def orthonormal(self) -> np.ndarray:
        """Coordinates in the L2-orthonormal basis."""
        return math.sqrt(0.5 * self.field.basis.length) * self.field.coefficients


def _check_step(h: float) -> None:
    if not h > 0:
        raise StepSizeError("Time step must be positive", {"h": h})


def ou_variance(lam: np.ndarray | float, alpha: np.ndarray | float, h: float) -> np.ndarray:
    """Variance alpha^2 (e^{2 lam h} - 1) / (2 lam) of the OU increment over h."""
    lam = np.asarray(lam, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    z = 2.0 * lam * h
    small = np.abs(lam * h) < SERIES_THRESHOLD
    safe_lam = np.where(small, 1.0, lam)
    exact = np.expm1(z) / (2.0 * safe_lam)
    return alpha**2 * np.where(small, h, exact)


def _amplitude_scale(spectrum: LinearSpectrum) -> float:
    return math.sqrt(2.0 / spectrum.basis.length)


def mild_noise_increment(
    spectrum: LinearSpectrum, noise: NoiseSpectrum, rng: WienerState, h: float
) -> np.ndarray:
    """Exact-in-law increment of int e^{(t+h-s)A} dW_N(s) over one step, shape (rows, N)."""
    _check_step(h)
    std = np.sqrt(ou_variance(spectrum.eigenvalues, noise.alphas, h)) * _amplitude_scale(spectrum)
    rng.t += h
    return rng.normals() * std


def ou_step(
    state: ConvolutionState,
    spectrum: LinearSpectrum,
    noise: NoiseSpectrum,
    rng: WienerState,
    h: float,
    increment: np.ndarray | None = None,
) -> ConvolutionState:
    """Advance W_A by one exact OU step.

    Pass ``increment`` to reuse the draw already applied to u.
    """
    _check_step(h)
    if increment is None:
        increment = mild_noise_increment(spectrum, noise, rng, h)
    decay = np.exp(spectrum.eigenvalues * h)
    coeffs = decay * state.field.coefficients + increment
    return ConvolutionState(SpectralField(state.field.basis, coeffs, state.field.kind), state.t + h)


def stationary_variance(
    spectrum: LinearSpectrum, noise: NoiseSpectrum, opt_out: np.ndarray | None = None
) -> np.ndarray:
    """Orthonormal-coordinate stationary variance alpha^2 / (2 |lambda|) per mode."""
    lam = spectrum.eigenvalues
    unstable = lam >= 0
    if opt_out is None:
        opt_out = np.zeros_like(unstable)
    opt_out = np.asarray(opt_out, dtype=bool)
    blocked = unstable & ~opt_out
    if np.any(blocked):
        modes = (np.flatnonzero(blocked) + 1).tolist()
        raise UnstableModeError(
            "Stationary law does not exist for modes with lambda_j >= 0",
            {"modes": modes, "nu": spectrum.nu},
        )
    safe = np.where(unstable, -1.0, lam)
    return np.where(unstable, 0.0, noise.alphas**2 / (2.0 * np.abs(safe)))


def stationary_convolution_sample(
    spectrum: LinearSpectrum,
    noise: NoiseSpectrum,
    rng: WienerState,
    opt_out: np.ndarray | None = None,
) -> ConvolutionState:
    """Draw W_A from its stationary law; opted-out unstable modes are set to 0."""
    std = np.sqrt(stationary_variance(spectrum, noise, opt_out)) * _amplitude_scale(spectrum)
    coeffs = rng.normals() * std
    return ConvolutionState(SpectralField(spectrum.basis, coeffs), rng.t)


class ConvolutionSampler:
    """Batched direct sampler of W_A(t) started from W_A(0) = 0.

    Used by the Monte Carlo verifiers, where only the law at fixed times matters.
    """

    def __init__(self, spectrum: LinearSpectrum, noise: NoiseSpectrum, seed: int):
        self.spectrum = spectrum
        self.noise = noise
        self.seed = seed
        self._rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed])))

    def std(self, t: float) -> np.ndarray:
        _check_step(t)
        variance = ou_variance(self.spectrum.eigenvalues, self.noise.alphas, t)
        return np.sqrt(variance) * _amplitude_scale(self.spectrum)

    def sample(self, t: float, count: int) -> np.ndarray:
        """Coefficient samples of shape (count, rows, N)."""
        basis = self.spectrum.basis
        normals = self._rng.standard_normal((count, basis.rows, basis.truncation))
        return normals * self.std(t)
