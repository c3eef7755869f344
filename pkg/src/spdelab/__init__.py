"""Spectral Galerkin simulation of semilinear stochastic heat equations with
multiplicative noise, plus tools to measure spatial and temporal regularity."""
from spdelab.kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
