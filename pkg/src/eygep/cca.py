"""CCA, ridge-CCA, PLS and multiview CCA as generalized eigenproblems, plus metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficient, ShapeMismatch, TooFewSamples, TooFewViews, ZeroOracle
from .ey import ey_loss_stochastic
from .linalg import GepPair, as_matrix, empirical_cov, gep_solve
from .views import MultiviewBatch, WeightSet, _as_alpha, check_compatible


def _block_bounds(dims):
    b = np.cumsum((0,) + tuple(dims))
    return list(zip(b[:-1], b[1:]))


def gep_blocks(batch, alpha=None):
    """Dense ``(A, B_alpha)`` for a batch, without the positive-definiteness check."""
    if batch.n_views < 2:
        raise TooFewViews("the CCA family needs at least two views")
    alpha = _as_alpha(alpha, batch.n_views)
    full = empirical_cov(batch.stacked())
    bounds = _block_bounds(batch.dims)
    a = full.copy()
    b = np.zeros_like(full)
    for (lo, hi), al in zip(bounds, alpha):
        a[lo:hi, lo:hi] = 0.0
        b[lo:hi, lo:hi] = al * np.eye(hi - lo) + (1.0 - al) * full[lo:hi, lo:hi]
    return a, b


def build_gep(source, alpha=None, dims=None, check_pd=True):
    """Block pencil of the CCA family.

    ``source`` is a :class:`MultiviewBatch`, or a full joint covariance matrix
    together with the per-view ``dims``. ``alpha`` = 0 gives CCA, 1 gives PLS.
    """
    if isinstance(source, MultiviewBatch):
        a, b = gep_blocks(source, alpha)
        return GepPair(a, b, check_pd)
    if dims is None:
        raise ShapeMismatch("dims are required when building from a covariance matrix")
    cov = as_matrix(source, "covariance")
    if cov.shape != (sum(dims), sum(dims)):
        raise ShapeMismatch(f"covariance {cov.shape} does not match dims {dims}")
    if len(dims) < 2:
        raise TooFewViews("the CCA family needs at least two views")
    alpha = _as_alpha(alpha, len(dims))
    a = cov.copy()
    b = np.zeros_like(cov)
    for (lo, hi), al in zip(_block_bounds(dims), alpha):
        a[lo:hi, lo:hi] = 0.0
        b[lo:hi, lo:hi] = al * np.eye(hi - lo) + (1.0 - al) * cov[lo:hi, lo:hi]
    return GepPair(0.5 * (a + a.T), 0.5 * (b + b.T), check_pd)


def default_jitter(pair):
    return 1e-8 * float(np.trace(pair.B)) / pair.dim


def cca_exact(batch, k, alpha=None, jitter=0.0):
    """Exact top-K spectrum and per-view weights.

    The GEP eigenvectors satisfy ``U^T B U = I``; they are multiplied by
    ``sqrt(I)`` so that for two views each ``U_i^T B_ii U_i`` is the identity.
    """
    pair = build_gep(batch, alpha, check_pd=jitter == 0.0)
    vals, u = gep_solve(pair, k, jitter)
    u = u * np.sqrt(batch.n_views)
    return vals, WeightSet.from_stacked(u, batch.dims, _as_alpha(alpha, batch.n_views))


def fast_linear_gradient(batch, batch2, weights, alpha=None):
    """Per-view gradients of the two-batch EY loss in O(M K D)."""
    ev = ey_loss_stochastic(batch, batch2, weights, alpha)
    return [ev.gradient[lo:hi] for lo, hi in _block_bounds(weights.dims)]


def dense_linear_gradient(batch, batch2, weights, alpha=None):
    """Reference gradient through explicit D x D covariance blocks."""
    alpha = weights.alpha if alpha is None else alpha
    a, b = gep_blocks(batch, alpha)
    _, b2 = gep_blocks(batch2, alpha)
    u = weights.stacked()
    bu = b @ u
    bu2 = b2 @ u
    g = -4.0 * (a @ u) + 2.0 * bu @ (u.T @ bu2) + 2.0 * bu2 @ (u.T @ bu)
    return [g[lo:hi] for lo, hi in _block_bounds(weights.dims)]


def representation_spectrum(zs, k=None, alpha=None, jitter=0.0):
    """Top-K eigenvalues of the CCA-family pencil of the representations ``zs``.

    For two views with ``alpha = 0`` these are the canonical correlations
    between the representations.
    """
    batch = MultiviewBatch(tuple(zs))
    k = batch.dims[0] if k is None else k
    pair = build_gep(batch, alpha, check_pd=False)
    try:
        vals, _ = gep_solve(pair, k, jitter)
    except Exception as exc:
        raise RankDeficient("representations have a singular covariance") from exc
    return vals


def learned_spectrum(batch, weights, alpha=None, jitter=0.0):
    """Spectrum captured by ``weights`` on ``batch``.

    Rayleigh-Ritz over the span of the per-view weight blocks: the projected
    pencil has dimension ``I*K`` and is formed from the representations in
    O(M D K); its top-K values are returned.
    """
    check_compatible(batch, weights)
    alpha = weights.alpha if alpha is None else _as_alpha(alpha, batch.n_views)
    zs = weights.transform(batch)
    k = weights.k
    full = empirical_cov(np.hstack(zs))
    pa = full.copy()
    pb = np.zeros_like(full)
    for i, (u, al) in enumerate(zip(weights.views, alpha)):
        sl = slice(i * k, (i + 1) * k)
        pa[sl, sl] = 0.0
        pb[sl, sl] = al * (u.T @ u) + (1.0 - al) * full[sl, sl]
    try:
        vals, _ = gep_solve(GepPair(0.5 * (pa + pa.T), 0.5 * (pb + pb.T)), k, jitter)
    except Exception as exc:
        raise RankDeficient("projected covariance is singular") from exc
    return vals


def covariance_ops(batch, alpha=None):
    """Callables applying the batch estimates of ``A`` and ``B_alpha`` to stacked weights in O(M D K)."""
    alpha = _as_alpha(alpha, batch.n_views)
    xs = [x - x.mean(axis=0) for x in batch.views]
    n = batch.n_samples - 1
    bounds = _block_bounds(batch.dims)

    def a_op(w):
        zs = [x @ w[lo:hi] for x, (lo, hi) in zip(xs, bounds)]
        s = sum(zs)
        return np.vstack([x.T @ (s - z) / n for x, z in zip(xs, zs)])

    def b_op(w):
        out = []
        for x, (lo, hi), al in zip(xs, bounds, alpha):
            wi = w[lo:hi]
            out.append(al * wi + (1.0 - al) * (x.T @ (x @ wi)) / n)
        return np.vstack(out)

    return a_op, b_op


def metric_pcc(learned, oracle):
    """Proportion of correlation captured; negative learned values count as 0."""
    learned = np.asarray(learned, dtype=np.float64)
    oracle = np.asarray(oracle, dtype=np.float64)
    if learned.shape != oracle.shape:
        raise ShapeMismatch("learned and oracle spectra differ in length")
    total = float(np.sum(oracle))
    if not total > 0:
        raise ZeroOracle("oracle spectrum sums to zero")
    return float(np.sum(np.clip(learned, 0.0, None))) / total


def metric_tcc(z1, z2, k=None):
    """Sum of the top-K canonical correlations between two representations."""
    z1 = as_matrix(z1, "Z1")
    z2 = as_matrix(z2, "Z2")
    if z1.shape[0] < 2:
        raise TooFewSamples("need at least 2 held-out samples")
    k = min(z1.shape[1], z2.shape[1]) if k is None else k
    return float(np.sum(_canonical_correlations(z1, z2)[:k]))


def _canonical_correlations(z1, z2):
    # whitening via thin SVD of each centred block; rank-deficient blocks are
    # handled by dropping null directions
    def basis(z):
        zc = z - z.mean(axis=0)
        uu, s, _ = np.linalg.svd(zc, full_matrices=False)
        keep = s > 1e-12 * max(s[0] if s.size else 0.0, 1e-300)
        return uu[:, keep]

    q1, q2 = basis(z1), basis(z2)
    if q1.shape[1] == 0 or q2.shape[1] == 0:
        return np.zeros(min(z1.shape[1], z2.shape[1]))
    s = np.clip(np.linalg.svd(q1.T @ q2, compute_uv=False), 0.0, 1.0)
    out = np.zeros(min(z1.shape[1], z2.shape[1]))
    out[: s.size] = s[: out.size]
    return out


def metric_tmcc(zs, k=None, mode="pairwise"):
    """Total multiview correlation captured.

    ``mode="pairwise"`` averages :func:`metric_tcc` over ordered view pairs;
    ``mode="coordinate"`` averages the plain correlations ``corr(Z_k^i, Z_k^j)``
    of matching coordinates instead.
    """
    zs = [as_matrix(z, f"Z{i}") for i, z in enumerate(zs)]
    n = len(zs)
    if n < 2:
        raise TooFewViews("need at least two views")
    if zs[0].shape[0] < 2:
        raise TooFewSamples("need at least 2 held-out samples")
    k = zs[0].shape[1] if k is None else k
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if mode == "pairwise":
                total += metric_tcc(zs[i], zs[j], k)
            elif mode == "coordinate":
                zi = zs[i][:, :k] - zs[i][:, :k].mean(axis=0)
                zj = zs[j][:, :k] - zs[j][:, :k].mean(axis=0)
                den = np.sqrt(np.sum(zi * zi, axis=0) * np.sum(zj * zj, axis=0))
                total += float(np.sum(np.where(den > 0, np.sum(zi * zj, axis=0) / np.where(den > 0, den, 1.0), 0.0)))
            else:
                raise ValueError(f"unknown mode {mode!r}")
    return total / (n * (n - 1))


@dataclass(frozen=True)
class InterlaceReport:
    holds: bool
    equality: bool
    gaps: np.ndarray
    projected: np.ndarray
    original: np.ndarray


def interlace_check(batch, weights, alpha=None, slack=1e-8, equality_tol=1e-6, original=None):
    """Compare the top-K multiview spectrum of projected and original data.

    The projected values must not exceed the original ones (element-wise);
    all gaps below ``equality_tol`` indicate that the projection spans the
    top-K CCA subspace. ``original`` may carry the precomputed top-K spectrum
    of the unprojected data.
    """
    check_compatible(batch, weights)
    alpha = weights.alpha if alpha is None else alpha
    for i, u in enumerate(weights.views):
        s = np.linalg.svd(u, compute_uv=False)
        if s.size < u.shape[1] or s[-1] <= 1e-12 * s[0]:
            raise RankDeficient(f"projection for view {i} is not of full column rank")
    k = weights.k
    if original is None:
        a, b = gep_blocks(batch, alpha)
        orig, _ = gep_solve(GepPair(a, b), k)
    else:
        orig = np.asarray(original, dtype=np.float64)[:k]
    proj = learned_spectrum(batch, weights, alpha)
    gaps = orig - proj
    return InterlaceReport(bool(np.all(gaps >= -slack)), bool(np.all(np.abs(gaps) < equality_tol)),
                           gaps, proj, orig)


def mcca_population_spectrum(rho, n_views):
    """Top multiview eigenvalues when every view pair shares canonical correlations ``rho``."""
    return (n_views - 1) * np.asarray(rho, dtype=np.float64)
