"""Eckhart-Young losses for stochastic generalized eigenproblems and the CCA family."""
from .errors import *  # noqa: F401,F403
from .linalg import GepPair, chol_inv_sqrt, empirical_cov, gep_solve, principal_angles, sym_eig
from .views import MultiviewBatch, WeightSet

__version__ = "0.1.0"
