"""Seeded random streams.

All randomness goes through numpy's Philox generator, a counter-based
algorithm whose output for a given seed is fixed by specification and does
not depend on the platform.
"""
import numpy as np


def make_rng(seed):
    if seed is None or int(seed) < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed}")
    return np.random.Generator(np.random.Philox(int(seed)))


def random_orthogonal(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def init_weights(d, k, rng):
    """Gaussian entries scaled by 1/sqrt(d)."""
    return rng.standard_normal((d, k)) / np.sqrt(d)
