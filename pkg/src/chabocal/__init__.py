"""Chaboche viscoplastic cyclic-test simulation and Bayesian calibration."""

__version__ = "0.1.0"

from .kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
