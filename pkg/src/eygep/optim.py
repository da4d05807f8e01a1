"""First-order optimizers and the two baseline eigen-solvers (SGHA, gamma-EigenGame).

Matrix estimates passed to the baseline updates may be dense arrays or
callables ``op(W) -> estimate @ W``; the callable form lets the caller keep
the per-step cost at O(M D K) by never forming D x D covariances.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, ShapeMismatch, ZeroColumn

KINDS = ("sgd", "momentum", "adam")


@dataclass
class OptimizerState:
    kind: str = "sgd"
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    t: int = 0
    m: list = field(default=None, repr=False)
    v: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigInvalid(f"unknown optimizer {self.kind!r}; expected one of {KINDS}")
        if not self.lr > 0:
            raise ConfigInvalid(f"lr must be positive, got {self.lr}")


def step(state, params, grads):
    """Apply one update; returns new parameter arrays and advances ``state``.

    ``params`` and ``grads`` are equal-length lists of arrays (a single array
    is also accepted and a single array is returned).
    """
    single = isinstance(params, np.ndarray)
    if single:
        params, grads = [params], [grads]
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ShapeMismatch("params and grads must match in number and shape")
    if state.m is None:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    elif any(m.shape != p.shape for m, p in zip(state.m, params)):
        raise ShapeMismatch("optimizer buffers do not match parameter shapes")
    state.t += 1
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if state.kind == "sgd":
            out.append(p - state.lr * g)
        elif state.kind == "momentum":
            state.m[i] = state.momentum * state.m[i] + g
            out.append(p - state.lr * state.m[i])
        else:
            state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * g
            state.v[i] = state.beta2 * state.v[i] + (1 - state.beta2) * g * g
            mhat = state.m[i] / (1 - state.beta1 ** state.t)
            vhat = state.v[i] / (1 - state.beta2 ** state.t)
            out.append(p - state.lr * mhat / (np.sqrt(vhat) + state.eps))
    return out[0] if single else out


def apply_op(op, w):
    if callable(op):
        return op(w)
    op = np.asarray(op)
    if op.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"estimate {op.shape} does not conform with W {w.shape}")
    return op @ w


def sgha_direction(w, a_hat, b_hat, a_hat2):
    """2 A W - 2 B W (W^T A' W); its population fixed points are B-orthonormal top-K eigenvectors."""
    aw = apply_op(a_hat, w)
    bw = apply_op(b_hat, w)
    aw2 = apply_op(a_hat2, w)
    return 2.0 * aw - 2.0 * bw @ (w.T @ aw2)


def sgha_update(w, a_hat, b_hat, a_hat2, lr):
    # The direction is an ascent direction (not the gradient of any loss),
    # so the step adds it; the appendix table prints the same rule with "-".
    return w + lr * sgha_direction(w, a_hat, b_hat, a_hat2)


@dataclass
class GammaEgState:
    """Running estimate of ``B W`` used by gamma-EigenGame."""

    bw: np.ndarray = None
    decay: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.decay < 1.0:
            raise ConfigInvalid(f"decay must lie in [0, 1), got {self.decay}")


def gamma_eg_direction(w, a_hat, bw):
    """Per-column EigenGame utility gradients with penalties against earlier columns."""
    aw = apply_op(a_hat, w)
    wbw = np.einsum("di,di->i", w, bw)
    waw = np.einsum("di,di->i", w, aw)
    g = aw * wbw - bw * waw
    k = w.shape[1]
    if k > 1:
        # cross[i, j] = w_i^T A w_j, wb[i, j] = w_i^T (B w_j)
        cross = w.T @ aw
        wb = w.T @ bw
        for i in range(1, k):
            j = np.arange(i)
            coef = cross[i, j] / wbw[j]
            g[:, i] -= bw[:, j] @ (coef * wbw[i]) - bw[:, i] * np.dot(coef, wb[i, j])
    return g


def retract(w):
    norms = np.linalg.norm(w, axis=0)
    if np.any(norms <= 1e-300) or not np.all(np.isfinite(norms)):
        raise ZeroColumn("cannot normalise a zero or non-finite column")
    return w / norms


def gamma_eg_update(w, state, a_hat, b_hat2, lr):
    """One gamma-EigenGame step: refresh the ``B W`` average, ascend, retract columns."""
    fresh = apply_op(b_hat2, w)
    if state.bw is None:
        bw = fresh
    else:
        if state.bw.shape != w.shape:
            raise ShapeMismatch("auxiliary estimate does not match W")
        bw = state.decay * state.bw + (1.0 - state.decay) * fresh
    g = gamma_eg_direction(w, a_hat, bw)
    return retract(w + lr * g), GammaEgState(bw, state.decay)
