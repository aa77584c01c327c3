"""
Exception hierarchy for the film-growth simulator.

Every error carries a ``context`` dict so that callers (the runner, the CLI)
can put the failing inputs into reports without parsing messages.
"""

from typing import Any


class FilmGrowthError(Exception):
    """Base class for all simulator errors."""

    def __init__(self, message: str, context: dict[str, Any] | None = None):
        super().__init__(message)
        self.message = message
        self.context = context or {}

    def to_dict(self) -> dict[str, Any]:
        return {"error": type(self).__name__, "message": self.message, "context": self.context}


class ConfigError(FilmGrowthError):
    """Invalid or unreadable run configuration.

    Args:
        message: Summary of the problem
        violations: Every constraint violation found, not just the first
        line: 1-based line of a YAML syntax error, when known
    """

    def __init__(
        self,
        message: str,
        violations: list[str] | None = None,
        line: int | None = None,
        context: dict[str, Any] | None = None,
    ):
        super().__init__(message, context)
        self.violations = violations or []
        self.line = line

    def to_dict(self) -> dict[str, Any]:
        data = super().to_dict()
        data["violations"] = list(self.violations)
        data["line"] = self.line
        return data


class ModeIndexError(FilmGrowthError, IndexError):
    """Mode index outside 1..N."""


class ResolutionError(FilmGrowthError):
    """Grid too coarse for the requested transform."""


class BasisError(FilmGrowthError):
    """Basis mismatch or symmetry violation."""


class DerivativeOrderError(FilmGrowthError):
    """Derivative order outside the supported set."""


class NormError(FilmGrowthError):
    """Unsupported norm kind or Sobolev index."""


class StepSizeError(FilmGrowthError):
    """Nonpositive time step."""


class UnstableModeError(FilmGrowthError):
    """Stationary law requested for a mode with nonnegative eigenvalue."""


class DivergenceError(FilmGrowthError):
    """Trajectory blew up (non-finite state or norm above the blow-up threshold)."""

    def __init__(self, message: str, t: float, norm: float, context: dict[str, Any] | None = None):
        super().__init__(message, context)
        self.t = t
        self.norm = norm

    def to_dict(self) -> dict[str, Any]:
        data = super().to_dict()
        data["t"] = self.t
        data["norm"] = self.norm
        return data


class InsufficientDataError(FilmGrowthError):
    """Recorded data does not cover the requested computation."""


class StabilizerNotNeededError(FilmGrowthError):
    """Stabilizer requested for a viscosity with no unstable direction (nu >= 0)."""


class StabilizerError(FilmGrowthError):
    """Stabilizer construction or certification failed."""


class MomentPreconditionError(FilmGrowthError):
    """Sampled moments violate the precondition E(W1^2 + W2^2) <= K."""


class FingerprintMismatchError(FilmGrowthError):
    """Ensemble statistics from different models or probe sets cannot be merged."""


class SnapshotError(FilmGrowthError):
    """Snapshot file with a bad magic, unknown version or truncated record."""
