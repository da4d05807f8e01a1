"""Dense symmetric linear algebra and the exact generalized eigenproblem oracle.

Matrices are plain ``float64`` numpy arrays. Everything the iterative solvers
produce is checked against :func:`gep_solve`, which is built on a cyclic
Jacobi eigensolver rather than LAPACK so the oracle is self-contained.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    KTooLarge,
    NonFinite,
    NotPositiveDefinite,
    NotSymmetric,
    ShapeMismatch,
    TooFewSamples,
)

SYMMETRY_RTOL = 1e-10


def as_matrix(x, name="matrix"):
    """Return ``x`` as a finite 2-D float64 array."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFinite(f"{name} contains non-finite entries")
    return m


def _check_symmetric(m, name):
    if m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got {m.shape}")
    scale = max(float(np.max(np.abs(m))) if m.size else 0.0, np.finfo(float).tiny)
    if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_RTOL * scale:
        raise NotSymmetric(f"{name} is not symmetric")
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class SymEigResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@lru_cache(maxsize=64)
def _round_robin(n):
    # Circle-method tournament: each round is a set of disjoint index pairs,
    # and every pair appears exactly once per sweep.
    m = n + (n % 2)
    idx = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            a, b = idx[i], idx[m - 1 - i]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        idx = [idx[0], idx[-1]] + idx[1:-1]
    return tuple(rounds)


def _fix_signs(vectors):
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * max(np.max(np.abs(col)), 1e-300))
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out


def jacobi_eigh(m, max_sweeps=60):
    """Cyclic (parallel-ordered) Jacobi on a symmetric matrix.

    Returns unsorted eigenvalues and the accumulated rotation matrix.
    """
    a = np.array(m, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    if n < 2:
        return np.diag(a).copy(), v
    rounds = _round_robin(n)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(n), v
    prev_off = np.inf
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= 1e-15 * norm or off >= prev_off:
            break
        prev_off = off
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            app = a[p, p]
            aqq = a[q, q]
            safe = np.where(active, apq, 1.0)
            theta = (aqq - app) / (2.0 * safe)
            sgn = np.where(theta >= 0.0, 1.0, -1.0)
            t = sgn / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            ap = a[:, p].copy()
            aq = a[:, q].copy()
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            rp = a[p, :].copy()
            rq = a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            a[p, p] = app - t * apq
            a[q, q] = aqq + t * apq
            a[p, q] = 0.0
            a[q, p] = 0.0

            vp = v[:, p].copy()
            vq = v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def sym_eig(m):
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending.

    Ties keep their original diagonal order; each eigenvector has its first
    non-negligible component positive.
    """
    m = _check_symmetric(as_matrix(m, "M"), "M")
    w, v = jacobi_eigh(m)
    order = np.argsort(-w, kind="stable")
    return SymEigResult(w[order], _fix_signs(v[:, order]))


def chol_inv_sqrt(b, jitter=0.0):
    """Symmetric inverse square root of ``b + jitter * I``."""
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    b = _check_symmetric(as_matrix(b, "B"), "B")
    bj = b + jitter * np.eye(b.shape[0])
    try:
        np.linalg.cholesky(bj)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("B is not positive definite") from exc
    res = sym_eig(bj)
    if np.min(res.eigenvalues) <= 0:
        raise NotPositiveDefinite("B is not positive definite")
    q = res.eigenvectors
    s = (q * res.eigenvalues ** -0.5) @ q.T
    return 0.5 * (s + s.T)


def center(x):
    return x - x.mean(axis=0, keepdims=True)


def empirical_cov(xa, xb=None):
    """Unbiased sample cross-covariance of the columns of two data matrices."""
    xa = as_matrix(xa, "Xa")
    xb = xa if xb is None else as_matrix(xb, "Xb")
    if xa.shape[0] != xb.shape[0]:
        raise ShapeMismatch("inputs must have the same number of rows")
    m = xa.shape[0]
    if m < 2:
        raise TooFewSamples(f"need at least 2 samples, got {m}")
    return center(xa).T @ center(xb) / (m - 1)


@dataclass(frozen=True)
class GepPair:
    """A symmetric-definite pencil ``(A, B)``.

    ``B`` is checked for positive definiteness by Cholesky unless
    ``check_pd`` is false (for pencils that will only be solved with jitter).
    """

    A: np.ndarray
    B: np.ndarray
    check_pd: bool = True

    def __post_init__(self):
        a = _check_symmetric(as_matrix(self.A, "A"), "A")
        b = _check_symmetric(as_matrix(self.B, "B"), "B")
        if a.shape != b.shape:
            raise ShapeMismatch(f"A {a.shape} and B {b.shape} differ in shape")
        if self.check_pd:
            try:
                np.linalg.cholesky(b)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefinite("B is not positive definite") from exc
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)

    @property
    def dim(self):
        return self.A.shape[0]


def gep_solve(pair, k, jitter=0.0):
    """Top-``k`` generalized eigenpairs of ``A u = lambda B u``.

    Reduces through the Cholesky factor ``B = L L^T`` to the symmetric
    matrix ``L^-1 A L^-T``; the returned eigenvectors are B-orthonormal.
    """
    d = pair.dim
    if k > d:
        raise KTooLarge(f"K={k} exceeds dimension {d}")
    if k < 1:
        raise ValueError("K must be positive")
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    b = pair.B + jitter * np.eye(d)
    try:
        chol = np.linalg.cholesky(b)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("B is not positive definite") from exc
    tmp = np.linalg.solve(chol, pair.A)
    c = np.linalg.solve(chol, tmp.T)
    res = sym_eig(0.5 * (c + c.T))
    u = np.linalg.solve(chol.T, res.eigenvectors[:, :k])
    return res.eigenvalues[:k].copy(), u


def principal_angles(x, y, inner=None):
    """Principal angles (radians, ascending) between the column spans of x and y.

    ``inner`` optionally gives an SPD Gram matrix defining the inner product.
    """
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if inner is not None:
        chol = np.linalg.cholesky(as_matrix(inner, "inner"))
        x = chol.T @ x
        y = chol.T @ y
    qx, _ = np.linalg.qr(x)
    qy, _ = np.linalg.qr(y)
    cos = np.clip(np.linalg.svd(qx.T @ qy, compute_uv=False), 0.0, 1.0)
    angles = np.arccos(cos)[::-1]
    # arccos loses accuracy near zero; small angles come from the sines
    resid = qy - qx @ (qx.T @ qy)
    sin = np.clip(np.linalg.svd(resid, compute_uv=False), 0.0, 1.0)
    small = np.sort(np.arcsin(sin))
    k = min(len(angles), len(small))
    use_sin = angles[:k] < 0.5
    angles[:k] = np.where(use_sin, small[:k], angles[:k])
    return np.sort(angles)
