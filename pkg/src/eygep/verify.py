"""Property suites behind ``eygep verify``; each returns a list of (name, passed, detail)."""
from __future__ import annotations

import numpy as np

from .cca import cca_exact, interlace_check
from .ey import ey_step_size, train_restarts
from .linalg import chol_inv_sqrt, gep_solve, sym_eig
from .rng import make_rng
from .ssl import (
    VicregParams,
    bt_collapse_constant,
    check_cca_equivalence,
    collapse_scan,
    fit_vicreg,
    vr_collapse_threshold,
)
from .synthetic import gen_gaussian, random_gep
from .views import WeightSet


def suite_oracle(n_instances=50, seed=0, restarts=5, steps=4000):
    """gep_solve invariants, agreement with the B^{-1/2} route, and the EY optimum value."""
    rng = make_rng(seed)
    out = []
    for i in range(n_instances):
        d = int(rng.integers(4, 13))
        k = int(rng.integers(1, min(4, d) + 1))
        pair, _ = random_gep(d, k, rng)
        vals, u = gep_solve(pair, k)
        scale = np.max(np.abs(pair.A)) + np.max(np.abs(pair.B))
        orth = np.max(np.abs(u.T @ pair.B @ u - np.eye(k)))
        resid = np.max(np.abs(pair.A @ u - pair.B @ u * vals))
        s = chol_inv_sqrt(pair.B)
        alt = sym_eig(s @ pair.A @ s).eigenvalues[:k]
        _, losses = train_restarts(pair, k, restarts, steps, ey_step_size(pair), seed=seed + i)
        gap = float(np.max(np.abs(losses + np.sum(vals ** 2))))
        ok = orth <= 1e-8 and resid <= 1e-7 * scale and np.max(np.abs(alt - vals)) <= 1e-8 and gap <= 1e-3
        out.append((f"oracle[{i}] D={d} K={k}", bool(ok),
                    f"orth={orth:.1e} resid={resid:.1e} ey_gap={gap:.1e}"))
    return out


def suite_interlace(n_instances=20, n_proj=200, seed=0):
    rng = make_rng(seed)
    out = []
    for i in range(n_instances):
        d1, d2 = int(rng.integers(3, 8)), int(rng.integers(3, 8))
        k = int(rng.integers(1, min(d1, d2) + 1))
        rho = np.sort(rng.uniform(0.1, 0.9, k))[::-1]
        inst = gen_gaussian((d1, d2), k, rho, 500, seed=seed * 1000 + i)
        worst = np.inf
        orig, planted = cca_exact(inst.batch, k)
        for _ in range(n_proj):
            w = WeightSet((rng.standard_normal((d1, k)), rng.standard_normal((d2, k))))
            worst = min(worst, float(np.min(interlace_check(inst.batch, w, original=orig).gaps)))
        rep = interlace_check(inst.batch, planted)
        ok = worst >= -1e-8 and rep.equality
        out.append((f"interlace[{i}] D=({d1},{d2}) K={k}", bool(ok),
                    f"min_gap={worst:.1e} planted_max_gap={np.max(np.abs(rep.gaps)):.1e}"))
    return out


def suite_collapse(seed=0, restarts=20, steps=20000):
    """Collapse predicted by the thresholds must be observed; the converse is only reported."""
    out = []
    p = VicregParams(1.0, 1.0, 1.0)
    mu, beta_max = vr_collapse_threshold(p, 0.5, 0.0)
    out.append(("vr_threshold(0.5,0)", mu == 0.25 and beta_max == 0.015625, f"mu={mu} beta_max={beta_max}"))
    c = bt_collapse_constant(0.9, 0.1)
    out.append(("bt_constant(0.9,0.1)", abs(c - 0.8 * 0.2 / 2.6) <= 1e-9, f"C={c:.10f}"))
    lambdas = [(l1, 0.05) for l1 in (0.3, 0.45, 0.6, 0.75, 0.9)]
    for method in ("vicreg", "bt"):
        if method == "vicreg":
            thr = [vr_collapse_threshold(p, l1, l2)[1] for l1, l2 in lambdas]
        else:
            thr = [bt_collapse_constant(l1, l2) for l1, l2 in lambdas]
        betas = sorted(set(float(f * t) for t in thr for f in (0.5,)) | {0.5, 2.0})
        rows = collapse_scan(method, lambdas, betas, p, restarts, steps, seed)
        for r in rows:
            if r.predicted_collapse:
                ok = r.collapsed == r.restarts
                if method == "bt":
                    ok = ok and r.max_sign_distance <= 1e-4
                detail = f"collapsed {r.collapsed}/{r.restarts}"
            else:
                ok = True
                detail = f"not predicted; collapsed {r.collapsed}/{r.restarts} (report only)"
            out.append((f"{method} lambda=({r.lambda1},{r.lambda2}) beta={r.beta:.4g}", bool(ok), detail))
    return out


def suite_equivalence(seed=0):
    p = VicregParams(1.0, 1.0, 1.0)
    inst = gen_gaussian((3, 3), 2, (0.4, 0.2), 2000, seed=seed)
    bs, gn = fit_vicreg(inst.batch, 2, p, steps=5000, lr=0.05, seed=seed)
    rep = check_cca_equivalence(bs, inst.batch, 1e-2, 1e-3, params=p, grad_tol=1e-6)
    out = [("vicreg optimum spans CCA subspace", rep.passed,
            f"max_angle={rep.max_angle:.1e} t_gap={rep.t_gap:.1e} grad={gn:.1e}")]
    _, w = cca_exact(inst.batch, 2)
    t = np.array([[1.0, 0.3], [-0.2, 0.8]])
    planted = check_cca_equivalence([w.views[0] @ t, w.views[1] @ t], inst.batch)
    out.append(("planted CCA weights", planted.passed, f"max_angle={planted.max_angle:.1e}"))
    rng = make_rng(seed + 1)
    rand = check_cca_equivalence([rng.standard_normal((3, 2)), rng.standard_normal((3, 2))], inst.batch)
    out.append(("random weights rejected", not rand.passed, f"max_angle={rand.max_angle:.2f}"))
    return out


SUITES = {
    "oracle": suite_oracle,
    "interlace": suite_interlace,
    "collapse": suite_collapse,
    "equivalence": suite_equivalence,
}
