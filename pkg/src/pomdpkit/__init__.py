"""Finite-state POMDP toolkit: filtering, change detection, stochastic orders,
belief-grid dynamic programming, Markov games and stochastic search."""
from .kernels import BACKEND
from .markov import RngStream

__version__ = "0.1.0"
__all__ = ["BACKEND", "RngStream", "__version__"]
