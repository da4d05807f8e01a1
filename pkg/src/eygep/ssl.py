"""Linear self-supervised losses (VICReg, Barlow Twins) and their CCA structure.

Weights follow the convention ``Z_i = X_i B_i``; covariance blocks are
``C_ij = Cov(Z_i, Z_j)``. The matrix-form losses take coordinates ``T`` in a
CCA basis with diagonal correlations ``lam`` and accept leading batch axes so
many restarts or grid points can be optimised at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cca import cca_exact
from .errors import (
    ConfigInvalid,
    DegenerateData,
    InvalidLambdas,
    NotConverged,
    RankZero,
    ShapeMismatch,
    TooFewSamples,
)
from .linalg import as_matrix, center, chol_inv_sqrt, empirical_cov, principal_angles
from .rng import make_rng

RANK_RTOL = 1e-8


@dataclass(frozen=True)
class VicregParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.gamma > 0):
            raise ConfigInvalid("VICReg weights must all be strictly positive")


def _two_views(batch, weights):
    views = batch.views if hasattr(batch, "views") else tuple(batch)
    ws = weights.views if hasattr(weights, "views") else tuple(weights)
    if len(views) != 2 or len(ws) != 2:
        raise ShapeMismatch("expected exactly two views and two weight matrices")
    xs = [as_matrix(x, "X") for x in views]
    bs = [as_matrix(b, "B") for b in ws]
    if xs[0].shape[0] != xs[1].shape[0]:
        raise ShapeMismatch("views must share the sample count")
    if xs[0].shape[0] < 2:
        raise TooFewSamples("need at least 2 samples")
    for x, b in zip(xs, bs):
        if x.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"weights {b.shape} do not conform with data {x.shape}")
    if bs[0].shape[1] != bs[1].shape[1]:
        raise ShapeMismatch("both views need the same number of output columns")
    return xs, bs


def _hinge_slope(c):
    # d/dc (1 - sqrt(c))_+ ; zero at c = 0 and wherever sqrt(c) >= 1
    inside = (c > 0) & (c < 1)
    return np.where(inside, -0.5 / np.sqrt(np.where(inside, c, 1.0)), 0.0)


def _v(x):
    # scalar or batch-shaped parameter, broadcast against a (..., K) vector
    return np.asarray(x, dtype=np.float64)[..., None]


def _m(x):
    # scalar or batch-shaped parameter, broadcast against a (..., K, K) matrix
    return np.asarray(x, dtype=np.float64)[..., None, None]


def l_vr(c, params):
    """Variance-covariance penalty of one view as a function of its covariance ``c`` (``..., K, K``).

    Parameters may be scalars or arrays matching the batch shape of ``c``.
    """
    d = np.diagonal(c, axis1=-2, axis2=-1)
    a, b, g = _v(params.alpha), _v(params.beta), _v(params.gamma)
    return (np.sum(_m(params.beta) * c * c, axis=(-2, -1))
            + np.sum(a * np.clip(1.0 - np.sqrt(np.clip(d, 0.0, None)), 0.0, None)
                     - b * d * d + g * d, axis=-1))


def l_vr_grad(c, params):
    """Symmetric derivative of :func:`l_vr` with respect to ``c``."""
    d = np.diagonal(c, axis1=-2, axis2=-1)
    g = 2.0 * _m(params.beta) * c
    diag = _v(params.alpha) * _hinge_slope(d) - 2.0 * _v(params.beta) * d + _v(params.gamma)
    idx = np.arange(c.shape[-1])
    g[..., idx, idx] += diag
    return g


def vicreg_loss(batch, weights, params):
    """VICReg loss in covariance form and its gradient with respect to both weight matrices."""
    xs, bs = _two_views(batch, weights)
    n = xs[0].shape[0] - 1
    xc = [center(x) for x in xs]
    zs = [x @ b for x, b in zip(xc, bs)]
    c11 = zs[0].T @ zs[0] / n
    c22 = zs[1].T @ zs[1] / n
    c12 = zs[0].T @ zs[1] / n
    loss = -2.0 * params.gamma * np.trace(c12) + l_vr(c11, params) + l_vr(c22, params)
    g1 = xc[0].T @ (-2.0 * params.gamma * zs[1] + 2.0 * zs[0] @ l_vr_grad(c11, params)) / n
    g2 = xc[1].T @ (-2.0 * params.gamma * zs[0] + 2.0 * zs[1] @ l_vr_grad(c22, params)) / n
    return float(loss), [g1, g2]


@dataclass(frozen=True)
class BarlowTwinsResult:
    loss: float
    variance_residuals: tuple
    gradient: list


def _bt_value(c, beta):
    d = np.diagonal(c, axis1=-2, axis2=-1)
    off = np.sum(c * c, axis=(-2, -1)) - np.sum(d * d, axis=-1)
    return np.sum((1.0 - d) ** 2, axis=-1) + np.asarray(beta, dtype=np.float64) * off


def _bt_dc(c, beta):
    g = 2.0 * _m(beta) * c
    idx = np.arange(c.shape[-1])
    g[..., idx, idx] = -2.0 * (1.0 - c[..., idx, idx])
    return g


def barlow_twins_loss(batch, weights, beta):
    """Constrained Barlow Twins loss on the cross-covariance.

    The unit-variance constraints are not folded into the loss; their
    residuals ``diag(C_ii) - 1`` are returned per view.
    """
    xs, bs = _two_views(batch, weights)
    n = xs[0].shape[0] - 1
    xc = [center(x) for x in xs]
    zs = [x @ b for x, b in zip(xc, bs)]
    c12 = zs[0].T @ zs[1] / n
    h = _bt_dc(c12, beta)
    g1 = xc[0].T @ (zs[1] @ h.T) / n
    g2 = xc[1].T @ (zs[0] @ h) / n
    resid = tuple(np.sum(z * z, axis=0) / n - 1.0 for z in zs)
    return BarlowTwinsResult(float(_bt_value(c12, beta)), resid, [g1, g2])


# --- matrix forms in CCA coordinates -------------------------------------------------

def _lam_mat(lam):
    lam = np.asarray(lam, dtype=np.float64)
    return lam[..., :, None] * np.eye(lam.shape[-1])


def vr_matrix_loss(t1, t2, lam, params):
    """``-2 gamma <T1, T2>_Lambda + l_VR(T1^T T1) + l_VR(T2^T T2)`` with ``Lambda = diag(lam)``."""
    lm = _lam_mat(lam)
    tt = np.swapaxes
    reward = np.trace(tt(t1, -1, -2) @ lm @ t2, axis1=-2, axis2=-1)
    return (-2.0 * np.asarray(params.gamma) * reward + l_vr(tt(t1, -1, -2) @ t1, params)
            + l_vr(tt(t2, -1, -2) @ t2, params))


def vr_tied_loss(t, lam, params):
    return vr_matrix_loss(t, t, lam, params)


def vr_tied_grad(t, lam, params):
    c = np.swapaxes(t, -1, -2) @ t
    return -4.0 * _m(params.gamma) * (_lam_mat(lam) @ t) + 4.0 * t @ l_vr_grad(c, params)


def bt_matrix_loss(t1, t2, lam, beta):
    """Barlow Twins in CCA coordinates; columns are assumed to have unit norm."""
    c = np.swapaxes(t1, -1, -2) @ _lam_mat(lam) @ t2
    return _bt_value(c, beta)


def bt_tied_loss(t, lam, beta):
    return bt_matrix_loss(t, t, lam, beta)


def bt_tied_grad(t, lam, beta):
    lm = _lam_mat(lam)
    c = np.swapaxes(t, -1, -2) @ lm @ t
    h = _bt_dc(c, beta)
    return lm @ t @ (h + np.swapaxes(h, -1, -2))


def trace_symmetry_gap(t1, t2, lam, f, gamma=1.0):
    """``L(T1,T2) - min(L(T1,T1), L(T2,T2))`` for ``L = -2 gamma <T1,T2>_Lambda + f(T1) + f(T2)``.

    Non-negative whenever ``lam >= 0``.
    """
    lm = _lam_mat(lam)

    def pair(a, b):
        return -2.0 * gamma * np.trace(a.T @ lm @ b) + f(a) + f(b)

    return pair(t1, t2) - min(pair(t1, t1), pair(t2, t2))


@dataclass(frozen=True)
class BtStationarityReport:
    C: np.ndarray
    L: np.ndarray


def bt_stationarity(t, lam, beta):
    """Lagrange multipliers ``L_k = (1 - C_kk) C_kk - beta sum_{l != k} C_kl^2``."""
    t = as_matrix(t, "T")
    c = t.T @ _lam_mat(lam) @ t
    d = np.diag(c)
    off = np.sum(c * c, axis=1) - d * d
    return BtStationarityReport(c, (1.0 - d) * d - beta * off)


# --- collapse thresholds -------------------------------------------------------------

def _f(m, lam, params):
    return m * m * params.gamma * (1.0 - lam) - m * params.alpha


def _m_star(lam, params):
    return min(1.0, params.alpha / (2.0 * params.gamma * (1.0 - lam)))


def vr_collapse_threshold(params, lambda1, lambda2):
    """``(mu, beta_max)``: VICReg with ``beta < beta_max`` has a zero bottom row at every minimiser.

    ``lambda1 == lambda2`` is accepted and gives ``beta_max = 0``.
    """
    if not (1.0 > lambda1 >= lambda2 >= 0.0):
        raise InvalidLambdas(f"need 1 > lambda1 >= lambda2 >= 0, got ({lambda1}, {lambda2})")
    m1 = _m_star(lambda1, params)
    m2 = _m_star(lambda2, params)
    mu = min(m1, -_f(m2, lambda2, params) / params.alpha)
    return mu, params.gamma * (lambda1 - lambda2) * mu * mu / 2.0


def bt_collapse_constant(lambda1, lambda2):
    """Barlow Twins threshold ``2(1-l1)(l1-l2) / ((3 l1 - l2)(l1 + l2))``."""
    if not (1.0 >= lambda1 >= lambda2 >= 0.0) or lambda1 + lambda2 <= 0.0:
        raise InvalidLambdas(f"need 1 >= lambda1 >= lambda2 >= 0 with positive sum, got ({lambda1}, {lambda2})")
    return 2.0 * (1.0 - lambda1) * (lambda1 - lambda2) / ((3.0 * lambda1 - lambda2) * (lambda1 + lambda2))


def _random_columns(shape, rng, max_norm=1.0):
    # columns with uniform random direction and norm in (0, max_norm]
    t = rng.standard_normal(shape)
    t /= np.linalg.norm(t, axis=-2, keepdims=True)
    return t * rng.uniform(0.05, max_norm, shape[:-2] + (1, shape[-1]))


def minimize_vr_tied(lam, params, t0, steps=20000, lr=0.02):
    """Gradient descent on the tied VICReg matrix loss; ``t0`` may carry batch axes."""
    # constant step for the first half, then geometric decay to lr / 1000 so
    # iterates settle onto minimisers sitting at the hinge kink
    t = np.array(t0, dtype=np.float64)
    half = steps // 2
    decay = 1e-3 ** (1.0 / max(steps - half, 1))
    eta = lr
    for i in range(steps):
        if i >= half:
            eta *= decay
        t = t - eta * vr_tied_grad(t, lam, params)
    return t


def minimize_bt_tied(lam, beta, t0, steps=20000, lr=0.05):
    """Projected gradient descent on the sphere for the tied Barlow Twins matrix loss."""
    t = np.array(t0, dtype=np.float64)
    t /= np.linalg.norm(t, axis=-2, keepdims=True)
    for _ in range(steps):
        g = bt_tied_grad(t, lam, beta)
        g = g - t * np.sum(g * t, axis=-2, keepdims=True)
        t = t - lr * g
        t /= np.linalg.norm(t, axis=-2, keepdims=True)
    return t


@dataclass(frozen=True)
class ScanRow:
    method: str
    lambda1: float
    lambda2: float
    beta: float
    restarts: int
    collapsed: int
    max_bottom_row: float
    max_sign_distance: float
    predicted_collapse: bool
    ranks: tuple


def _sign_distance(t):
    # distance of each 2x2 T to the nearest of the four (+-1, +-1; 0, 0) matrices
    s = np.sign(t[..., 0, :])
    s = np.where(s == 0, 1.0, s)
    target = np.zeros_like(t)
    target[..., 0, :] = s
    return np.max(np.abs(t - target), axis=(-2, -1))


def collapse_scan(method, lambdas, betas, params=None, restarts=20, steps=20000, seed=0, tol=1e-4):
    """Optimise the tied 2x2 matrix loss from many random starts for each ``(lambda, beta)``.

    ``lambdas`` is a list of ``(lambda1, lambda2)`` pairs and ``betas`` a list of
    penalty values; every combination is scanned. ``params`` supplies
    VICReg's alpha and gamma (its beta is replaced by each grid value).
    """
    if method not in ("vicreg", "bt"):
        raise ConfigInvalid(f"unknown method {method!r}")
    base = params if params is not None else VicregParams()
    grid = [(l1, l2, b) for (l1, l2) in lambdas for b in betas]
    rng = make_rng(seed)
    t0 = _random_columns((len(grid), restarts, 2, 2), rng)
    lam = np.array([[g[0], g[1]] for g in grid])[:, None, :]
    beta = np.array([g[2] for g in grid])[:, None]
    if method == "vicreg":
        p = _BroadcastParams(base.alpha, beta, base.gamma)
        t = minimize_vr_tied(lam, p, t0, steps)
    else:
        t = minimize_bt_tied(lam, beta, t0, steps)
    rows = []
    for gi, (l1, l2, b) in enumerate(grid):
        tg = t[gi]
        bottom = np.linalg.norm(tg[:, 1, :], axis=-1)
        sv = np.linalg.svd(tg, compute_uv=False)
        ranks = tuple(int(np.sum(s > 1e-6 * max(s[0], 1e-300))) for s in sv)
        if method == "vicreg":
            predicted = l1 > l2 and b < vr_collapse_threshold(VicregParams(base.alpha, b, base.gamma), l1, l2)[1]
        else:
            predicted = l1 > l2 and b < bt_collapse_constant(l1, l2)
        rows.append(ScanRow(method, l1, l2, b, restarts, int(np.sum(bottom <= tol)),
                            float(np.max(bottom)), float(np.max(_sign_distance(tg))),
                            bool(predicted), ranks))
    return rows


@dataclass(frozen=True)
class _BroadcastParams:
    # VicregParams without validation, so beta can be an array
    alpha: object
    beta: object
    gamma: object


def vr_phi(lam, params, restarts=20, steps=20000, seed=0):
    """``min_T`` of the tied VICReg matrix loss, by multi-start gradient descent."""
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0) or np.any(lam > 1):
        raise InvalidLambdas("lambda must lie in [0, 1]")
    k = lam.size
    rng = make_rng(seed)
    t0 = _random_columns((restarts, k, k), rng)
    t = minimize_vr_tied(lam, params, t0, steps)
    return float(np.min(vr_tied_loss(t, lam, params)))


def vr_phi_1d(lam, params):
    """Closed form of :func:`vr_phi` for a single coordinate: ``2 (alpha + f(m*))``."""
    if lam >= 1.0:
        return 2.0 * (params.alpha + _f(1.0, min(lam, 1.0), params))
    m = _m_star(lam, params)
    return 2.0 * (params.alpha + _f(m, lam, params))


# --- CCA-basis decomposition ---------------------------------------------------------

@dataclass(frozen=True)
class SubspaceDecomposition:
    U: tuple
    T: tuple
    Lambda: np.ndarray
    ranks: tuple


def _rank_basis(b):
    p, s, qt = np.linalg.svd(b, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return 0, None, None
    r = int(np.sum(s > RANK_RTOL * s[0]))
    return r, p[:, :r] * s[:r], qt[:r]


def decompose_subspace(batch, weights):
    """Factor ``B_i = U_i T_i`` with ``U_i`` a CCA basis of common height ``R``.

    ``R`` is the larger of the two weight ranks. The lower-rank view's basis is
    completed with the leading right-singular vectors of its data residual
    outside the current span, and CCA of the completed variables gives ``U``.
    """
    xs, bs = _two_views(batch, weights)
    ranks, bases, coords = [], [], []
    for b in bs:
        r, basis, m = _rank_basis(b)
        ranks.append(r)
        bases.append(basis)
        coords.append(m)
    big_r = max(ranks)
    if big_r == 0:
        raise RankZero("both weight matrices are zero")
    covs = [empirical_cov(x) for x in xs]
    full = []
    for x, s, r, basis in zip(xs, covs, ranks, bases):
        if r == big_r:
            full.append(basis)
            continue
        xc = center(x)
        if r == 0:
            resid = xc
        else:
            proj = basis @ np.linalg.solve(basis.T @ s @ basis, basis.T @ s)
            resid = xc - xc @ proj.T
        _, sv, vt = np.linalg.svd(resid, full_matrices=False)
        need = big_r - r
        if sv.size < need or sv[need - 1] <= RANK_RTOL * max(sv[0], 1e-300):
            raise DegenerateData("residual data cannot complete the basis")
        extra = vt[:need].T
        full.append(extra if r == 0 else np.hstack([basis, extra]))
    zs = [center(x) @ b for x, b in zip(xs, full)]
    try:
        w1 = chol_inv_sqrt(empirical_cov(zs[0]))
        w2 = chol_inv_sqrt(empirical_cov(zs[1]))
    except Exception as exc:
        raise DegenerateData("transformed variables are linearly dependent") from exc
    p, lam, qt = np.linalg.svd(w1 @ empirical_cov(zs[0], zs[1]) @ w2)
    signs = np.sign(p[np.argmax(np.abs(p), axis=0), np.arange(p.shape[1])])
    signs = np.where(signs == 0, 1.0, signs)
    p = p * signs
    q = qt.T * signs
    vs = [w1 @ p, w2 @ q]
    us, ts = [], []
    for bbar, v, r, m in zip(full, vs, ranks, coords):
        us.append(bbar @ v)
        tbar = np.linalg.inv(v)
        ts.append(tbar[:, :r] @ m if r else np.zeros((big_r, bs[0].shape[1])))
    return SubspaceDecomposition(tuple(us), tuple(ts), lam, tuple(ranks))


# --- VICReg / CCA equivalence --------------------------------------------------------

def fit_vicreg(batch, k, params, steps=20000, lr=0.05, seed=0, init=None):
    """Full-batch gradient descent on untied VICReg weights; returns weights and final gradient norm."""
    rng = make_rng(seed)
    views = batch.views
    bs = list(init) if init is not None else [rng.standard_normal((x.shape[1], k)) / np.sqrt(x.shape[1]) for x in views]
    for _ in range(steps):
        _, g = vicreg_loss(batch, bs, params)
        bs = [b - lr * gi for b, gi in zip(bs, g)]
    _, g = vicreg_loss(batch, bs, params)
    return bs, float(np.sqrt(sum(np.sum(gi * gi) for gi in g)))


@dataclass(frozen=True)
class EquivalenceReport:
    passed: bool
    rank: int
    angles: tuple
    max_angle: float
    t_gap: float
    grad_norm: float


def check_cca_equivalence(weights, batch, angle_tol=1e-2, t_tol=1e-3, params=None, grad_tol=None,
                          lam_floor=1e-8):
    """Do the representations span a top-R CCA subspace with tied coordinates?

    Angles are measured per view in the inner product of the view covariance,
    i.e. between subspaces of random variables. ``t_gap`` is the largest
    difference between the two decomposition coordinate matrices over rows
    with positive correlation.
    """
    xs, bs = _two_views(batch, weights)
    grad_norm = float("nan")
    if params is not None:
        _, g = vicreg_loss(batch, bs, params)
        grad_norm = float(np.sqrt(sum(np.sum(gi * gi) for gi in g)))
        if grad_tol is not None and grad_norm > grad_tol:
            raise NotConverged(f"gradient norm {grad_norm:.3e} exceeds {grad_tol:.3e}")
    dec = decompose_subspace(batch, bs)
    r = max(dec.ranks)
    _, cca_w = cca_exact(batch, r)
    angles = []
    for x, b, rk, u in zip(xs, bs, dec.ranks, cca_w.views):
        _, basis, _ = _rank_basis(b)
        if rk == 0:
            angles.append(np.array([np.pi / 2]))
            continue
        angles.append(principal_angles(basis, u, inner=empirical_cov(x)))
    angles = np.concatenate(angles)
    pos = dec.Lambda > lam_floor
    t_gap = float(np.max(np.abs(dec.T[0][pos] - dec.T[1][pos]), initial=0.0))
    max_angle = float(np.max(angles))
    ok = max_angle <= angle_tol and t_gap <= t_tol
    return EquivalenceReport(bool(ok), r, tuple(float(a) for a in angles), max_angle, t_gap, grad_norm)
