"""
Core numerical modules: spectral basis, noise, integrator, stabilizer and
observables. Orchestration (main, exporters) is imported from its own module.
"""

from .integrator import ModelSpec, SimParams, run_trajectory
from .noise import NoiseSpectrum, derive_seed
from .observables import EnsembleStats, ObservableSeries, merge
from .spectral import BasisSpec, BoundaryCondition, SpectralField
from .stabilizer import StabilizerProfile, build_phi

__all__ = [
    "BasisSpec",
    "BoundaryCondition",
    "SpectralField",
    "NoiseSpectrum",
    "derive_seed",
    "ModelSpec",
    "SimParams",
    "run_trajectory",
    "StabilizerProfile",
    "build_phi",
    "EnsembleStats",
    "ObservableSeries",
    "merge",
]
