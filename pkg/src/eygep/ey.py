"""The Eckhart-Young loss for generalized eigenproblems and its training loop.

For a pencil ``(A, B)`` the loss ``tr(-2 U^T A U + (U^T B U)^2)`` is minimised
exactly by matrices ``U_K Lambda_K^{1/2} O`` with ``U_K`` the top-K
B-orthonormal eigenvectors and ``O`` orthogonal, at value ``-sum lambda_k^2``
(when the top K eigenvalues are positive).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, SingularProjection, TooFewSamples
from .linalg import GepPair, as_matrix, center, gep_solve
from .optim import OptimizerState, step
from .rng import init_weights, make_rng
from .views import MultiviewBatch, WeightSet, check_compatible


@dataclass(frozen=True)
class EyEvaluation:
    loss: float
    reward: float
    norm_penalty: float
    orth_penalty: float
    gradient: np.ndarray


def _split_penalties(v, v2):
    prod = v * v2
    norm = float(np.trace(prod))
    return norm, float(np.sum(prod)) - norm


def ey_loss(pair, u):
    u = as_matrix(u, "U")
    if u.shape[0] != pair.dim:
        raise ShapeMismatch(f"U has {u.shape[0]} rows, pencil has dimension {pair.dim}")
    au = pair.A @ u
    bu = pair.B @ u
    ubu = u.T @ bu
    reward = 2.0 * float(np.sum(u * au))
    norm, orth = _split_penalties(ubu, ubu)
    grad = -4.0 * au + 4.0 * bu @ ubu
    return EyEvaluation(-reward + norm + orth, reward, norm, orth, grad)


def _view_stats(batch, weights):
    xs = [center(x) for x in batch.views]
    zs = [x @ u for x, u in zip(xs, weights.views)]
    n = batch.n_samples - 1
    v = sum(a * (u.T @ u) + (1.0 - a) * (z.T @ z) / n
            for a, u, z in zip(weights.alpha, weights.views, zs))
    return xs, zs, n, v


def ey_loss_stochastic(batch, batch2, weights, alpha=None):
    """Unbiased two-batch estimate of the data-form loss and its exact gradient.

    The loss is ``-2 tr C[Z] + <V_alpha[Z], V_alpha[Z']>``; the gradient
    differentiates through both batches and never forms a D x D matrix.
    ``alpha`` overrides ``weights.alpha`` when given.
    """
    if alpha is not None:
        weights = WeightSet(weights.views, alpha)
    check_compatible(batch, weights)
    check_compatible(batch2, weights)
    for b in (batch, batch2):
        if b.n_samples < 2:
            raise TooFewSamples("each batch needs at least 2 samples")
    xs, zs, n, v = _view_stats(batch, weights)
    xs2, zs2, n2, v2 = _view_stats(batch2, weights)
    s = sum(zs)
    tr_c = (float(np.sum(s * s)) - sum(float(np.sum(z * z)) for z in zs)) / n
    reward = 2.0 * tr_c
    norm, orth = _split_penalties(v, v2)
    vv = v + v2
    grads = []
    for a, u, x, z, x2, z2 in zip(weights.alpha, weights.views, xs, zs, xs2, zs2):
        g = (-4.0 / n) * (x.T @ (s - z)) + 2.0 * a * (u @ vv)
        if a != 1.0:
            g += 2.0 * (1.0 - a) * (x.T @ (z @ v2) / n + x2.T @ (z2 @ v) / n2)
        grads.append(g)
    return EyEvaluation(-reward + norm + orth, reward, norm, orth, np.vstack(grads))


def ey_stochastic_direction(u, a_hat, b_hat, b_hat2):
    """Descent gradient ``-4 A U + 2 B U (U^T B' U) + 2 B' U (U^T B U)``.

    This is ``-2`` times the appendix table's ascent expression; with
    ``B = B'`` it equals the exact gradient of :func:`ey_loss`.
    """
    u = as_matrix(u, "U")
    for m in (a_hat, b_hat, b_hat2):
        if np.shape(m) != (u.shape[0], u.shape[0]):
            raise ShapeMismatch("estimates must be D x D with D = rows of U")
    bu = b_hat @ u
    bu2 = b_hat2 @ u
    return -4.0 * (a_hat @ u) + 2.0 * bu @ (u.T @ bu2) + 2.0 * bu2 @ (u.T @ bu)


def ey_gradient_update(u, a_hat, b_hat, b_hat2, lr):
    return as_matrix(u, "U") - lr * ey_stochastic_direction(u, a_hat, b_hat, b_hat2)


class BatchPairSampler:
    """Yields pairs of independent mini-batches from a dataset.

    Default (epoch) mode shuffles the sample indices each epoch, cuts them into
    ``N // M`` disjoint batches and pairs batch ``t`` with batch ``t + 1``
    (cyclically). With ``iid=True`` each batch is drawn afresh with replacement.
    """

    def __init__(self, data, batch_size, rng, iid=False):
        if batch_size < 2:
            raise TooFewSamples("batch size must be at least 2")
        if not iid and 2 * batch_size > data.n_samples:
            raise TooFewSamples("epoch mode needs at least two disjoint batches")
        self.data = data
        self.m = int(batch_size)
        self.rng = rng
        self.iid = iid
        self._queue = []

    @property
    def steps_per_epoch(self):
        return max(self.data.n_samples // self.m, 1)

    def _refill(self):
        nb = self.data.n_samples // self.m
        perm = self.rng.permutation(self.data.n_samples)[: nb * self.m].reshape(nb, self.m)
        self._queue = [(perm[t], perm[(t + 1) % nb]) for t in range(nb)]
        self._queue.reverse()

    def next(self):
        if self.iid:
            n = self.data.n_samples
            i1 = self.rng.integers(0, n, self.m)
            i2 = self.rng.integers(0, n, self.m)
        else:
            if not self._queue:
                self._refill()
            i1, i2 = self._queue.pop()
        return self.data.take(i1), self.data.take(i2)


def train(source, k, optimizer=None, steps=1000, seed=0, batch_size=None, alpha=None,
          iid=False, init=None, callback=None):
    """Minimise the EY loss with a first-order optimizer.

    ``source`` is either a :class:`GepPair` (full-batch gradient of
    :func:`ey_loss`) or a :class:`MultiviewBatch` (two independent mini-batches
    per step, or the full data twice when ``batch_size`` is None).
    Returns the final weights (an array for a pencil, a WeightSet for data)
    and the per-step evaluations, each taken before its update.
    """
    opt = optimizer if optimizer is not None else OptimizerState()
    rng = make_rng(seed)
    if isinstance(source, GepPair):
        u = init_weights(source.dim, k, rng) if init is None else as_matrix(init, "init").copy()
        trace = []
        for t in range(steps):
            ev = ey_loss(source, u)
            trace.append(ev)
            u = step(opt, u, ev.gradient)
            if callback is not None:
                callback(t, u)
        return u, trace
    if not isinstance(source, MultiviewBatch):
        raise TypeError("source must be a GepPair or a MultiviewBatch")
    dims = source.dims
    if init is None:
        weights = WeightSet(tuple(init_weights(d, k, rng) for d in dims), alpha)
    else:
        weights = WeightSet(init.views, init.alpha if alpha is None else alpha)
    sampler = None if batch_size is None else BatchPairSampler(source, batch_size, rng, iid)
    u = weights.stacked()
    trace = []
    for t in range(steps):
        b1, b2 = (source, source) if sampler is None else sampler.next()
        ev = ey_loss_stochastic(b1, b2, weights)
        trace.append(ev)
        u = step(opt, u, ev.gradient)
        weights = WeightSet.from_stacked(u, dims, weights.alpha)
        if callback is not None:
            callback(t, weights)
    return weights, trace


def train_restarts(pair, k, n_restarts, steps, lr, seed=0):
    """Full-batch gradient descent from many random starts at once.

    Returns the final weights stacked as ``(n_restarts, D, K)`` and the final
    losses.
    """
    rng = make_rng(seed)
    d = pair.dim
    u = rng.standard_normal((n_restarts, d, k)) / np.sqrt(d)
    a, b = pair.A, pair.B
    for _ in range(steps):
        bu = b @ u
        ubu = np.swapaxes(u, 1, 2) @ bu
        u = u - lr * (-4.0 * (a @ u) + 4.0 * bu @ ubu)
    ubu = np.swapaxes(u, 1, 2) @ (b @ u)
    uau = np.swapaxes(u, 1, 2) @ (a @ u)
    losses = -2.0 * np.trace(uau, axis1=1, axis2=2) + np.sum(ubu * ubu, axis=(1, 2))
    return u, losses


def extract_spectrum(pair, u_hat):
    """Rayleigh-Ritz on ``span(u_hat)``: values descending and B-orthonormal directions."""
    u_hat = as_matrix(u_hat, "U")
    if u_hat.shape[0] != pair.dim:
        raise ShapeMismatch("U does not conform with the pencil")
    small_b = u_hat.T @ pair.B @ u_hat
    small_a = u_hat.T @ pair.A @ u_hat
    small_b = 0.5 * (small_b + small_b.T)
    scale = max(float(np.max(np.abs(small_b))), np.finfo(float).tiny)
    try:
        np.linalg.cholesky(small_b)
        ok = np.min(np.linalg.eigvalsh(small_b)) > 1e-13 * scale
    except np.linalg.LinAlgError:
        ok = False
    if not ok:
        raise SingularProjection("U^T B U is singular")
    vals, v = gep_solve(GepPair(0.5 * (small_a + small_a.T), small_b), u_hat.shape[1])
    return vals, u_hat @ v


def ey_step_size(pair):
    """Conservative full-batch step ``1 / (4|A| + 12 |A| |B| |B^-1|)`` (spectral norms)."""
    na = np.linalg.norm(pair.A, 2)
    nb = np.linalg.norm(pair.B, 2)
    nbi = 1.0 / np.min(np.linalg.eigvalsh(pair.B))
    return 1.0 / (4.0 * na + 12.0 * na * nb * nbi)
