"""
film-growth: spectral Galerkin simulation of a stochastic thin-film growth
equation, with stabilizer construction and Monte Carlo verification of its
moment and stationarity estimates.
"""

__version__ = "0.4.0"

__all__ = ["__version__"]
