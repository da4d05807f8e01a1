"""Synthetic data with known ground truth."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidRho, TooFewSamples
from .linalg import GepPair
from .rng import make_rng, random_orthogonal
from .views import MultiviewBatch


@dataclass(frozen=True)
class GaussianInstance:
    batch: MultiviewBatch
    rho: np.ndarray
    population_cov: np.ndarray
    dims: tuple


def _sqrtm_spd(eigs, q):
    return (q * np.sqrt(eigs)) @ q.T


def validate_rho(rho, k_signal, dims):
    rho = np.asarray(rho, dtype=np.float64).ravel()
    if rho.size != k_signal:
        raise InvalidRho(f"expected {k_signal} correlations, got {rho.size}")
    if k_signal > min(dims):
        raise InvalidRho("more signal components than the smallest view has dimensions")
    if np.any(rho < 0) or np.any(rho >= 1):
        raise InvalidRho("correlations must lie in [0, 1)")
    if np.any(np.diff(rho) > 0):
        raise InvalidRho("correlations must be in descending order")
    return rho


def gen_gaussian(dims, k_signal, rho, n, seed):
    """Multiview Gaussian whose pairwise canonical correlations are ``rho``.

    Each view is ``Sigma_i^{1/2} Q_i Y_i`` where the latent ``Y_i`` has unit
    variance and coordinate ``k`` of every view shares a common factor with
    weight ``sqrt(rho_k)``.
    """
    dims = tuple(int(d) for d in dims)
    rho = validate_rho(rho, k_signal, dims)
    if n < 2:
        raise TooFewSamples("need at least 2 samples")
    rng = make_rng(seed)
    loadings = []
    for d in dims:
        eigs = rng.uniform(0.5, 1.5, d)
        root = _sqrtm_spd(eigs, random_orthogonal(d, rng))
        loadings.append(root @ random_orthogonal(d, rng))
    shared = rng.standard_normal((n, k_signal))
    views = []
    for d, load in zip(dims, loadings):
        y = rng.standard_normal((n, d))
        y[:, :k_signal] = np.sqrt(rho) * shared + np.sqrt(1.0 - rho) * y[:, :k_signal]
        views.append(y @ load.T)
    bounds = np.cumsum((0,) + dims)
    cov = np.zeros((bounds[-1], bounds[-1]))
    for i, li in enumerate(loadings):
        for j, lj in enumerate(loadings):
            if i == j:
                p = np.eye(dims[i])
            else:
                p = np.zeros((dims[i], dims[j]))
                p[np.arange(k_signal), np.arange(k_signal)] = rho
            cov[bounds[i]:bounds[i + 1], bounds[j]:bounds[j + 1]] = li @ p @ lj.T
    cov = 0.5 * (cov + cov.T)
    return GaussianInstance(MultiviewBatch(tuple(views)), rho, cov, dims)


def sample_gaussian(cov, dims, n, rng):
    """Draw ``n`` joint samples from N(0, cov) split into views."""
    w, q = np.linalg.eigh(cov)
    root = q * np.sqrt(np.clip(w, 0.0, None))
    x = rng.standard_normal((n, len(w))) @ root.T
    bounds = np.cumsum((0,) + tuple(dims))
    return MultiviewBatch(tuple(x[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])))


@dataclass(frozen=True)
class AugmentedInstance:
    batch: MultiviewBatch
    base_cov: np.ndarray
    rho: np.ndarray


def augmented_correlations(base_eigs, noise, d):
    """Population canonical correlations of :func:`gen_augmented` data."""
    base_eigs = np.sort(np.asarray(base_eigs, dtype=np.float64))[::-1]
    extra = noise ** 2 * (np.sum(base_eigs) / d + 1.0)
    return base_eigs / (base_eigs + extra)


def gen_augmented(d, n, noise, seed):
    """Two augmented views of a shared Gaussian sample.

    ``X_i = (I + noise R_i / sqrt(d)) X_0 + noise E_i`` where each sample gets
    fresh standard Gaussian ``R_i`` (d x d) and ``E_i``; the two augmentations
    are independent and identically distributed, and ``noise = 0`` gives two
    identical views.
    """
    if noise < 0:
        raise ValueError("noise scale must be non-negative")
    if n < 2:
        raise TooFewSamples("need at least 2 samples")
    rng = make_rng(seed)
    base_eigs = np.linspace(2.0, 0.2, d)
    q = random_orthogonal(d, rng)
    base_cov = (q * base_eigs) @ q.T
    x0 = rng.standard_normal((n, d)) * np.sqrt(base_eigs) @ q.T
    views = []
    for _ in range(2):
        x = x0.copy()
        if noise > 0:
            # per-sample random linear map, applied in chunks to bound memory
            for lo in range(0, n, 4096):
                hi = min(n, lo + 4096)
                r = rng.standard_normal((hi - lo, d, d))
                x[lo:hi] += noise / np.sqrt(d) * np.einsum("nij,nj->ni", r, x0[lo:hi])
            x += noise * rng.standard_normal((n, d))
        views.append(x)
    return AugmentedInstance(MultiviewBatch(tuple(views)), base_cov,
                             augmented_correlations(base_eigs, noise, d))


def random_gep(d, k, rng, gap=0.1, b_cond=4.0):
    """Random pencil with positive, well separated top-K eigenvalues.

    Returns the pair and its full descending spectrum.
    """
    top = np.sort(rng.uniform(0.5, 2.0, k))[::-1]
    for i in range(1, k):
        top[i] = min(top[i], top[i - 1] - gap)
    top = top - min(0.0, top[-1] - 0.2)
    rest = rng.uniform(-1.0, top[-1] - gap, d - k)
    lam = np.concatenate([top, np.sort(rest)[::-1]])
    b_eigs = np.exp(rng.uniform(0.0, np.log(b_cond), d))
    qb = random_orthogonal(d, rng)
    b = (qb * b_eigs) @ qb.T
    b_inv_sqrt = (qb * b_eigs ** -0.5) @ qb.T
    u = b_inv_sqrt @ random_orthogonal(d, rng)
    bu = b @ u
    a = (bu * lam) @ bu.T
    return GepPair(0.5 * (a + a.T), 0.5 * (b + b.T)), lam
