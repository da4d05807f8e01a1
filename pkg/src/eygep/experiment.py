"""Experiment runner: validated configuration, training loops and metric CSV output."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .cca import (
    build_gep,
    cca_exact,
    covariance_ops,
    learned_spectrum,
    metric_pcc,
    metric_tcc,
    metric_tmcc,
)
from .deep import train_deep
from .errors import ConfigInvalid, EyGepError
from .ey import BatchPairSampler, ey_loss, ey_loss_stochastic, extract_spectrum
from .linalg import GepPair, gep_solve
from .matfile import read_matrix, write_matrix
from .optim import GammaEgState, OptimizerState, gamma_eg_update, retract, sgha_update, step
from .rng import init_weights, make_rng
from .ssl import VicregParams, barlow_twins_loss, vicreg_loss
from .views import MultiviewBatch, WeightSet, _as_alpha

METHODS = ("ey", "sgha", "geigengame")
TASKS = ("cca", "pls", "mcca", "gep", "vicreg", "bt", "deep")
CSV_VERSION = "eygep-metrics v1"
COLUMNS = ("step", "loss", "reward", "norm_penalty", "orth_penalty", "pcc", "tcc", "tmcc")


@dataclass
class RunConfig:
    method: str = "ey"
    task: str = "cca"
    k: int = 1
    alpha: tuple = None
    batch_size: int = None
    lr: float = 1e-2
    optimizer: str = "sgd"
    steps: int = None
    epochs: int = None
    seed: int = 0
    jitter: float = 0.0
    inputs: tuple = ()
    val_inputs: tuple = ()
    out: str = None
    hidden: tuple = ()
    beta: float = 1.0
    iid: bool = False
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.method not in METHODS:
            raise ConfigInvalid(f"method must be one of {METHODS}")
        if self.task not in TASKS:
            raise ConfigInvalid(f"task must be one of {TASKS}")
        if self.task in ("vicreg", "bt", "deep") and self.method != "ey":
            raise ConfigInvalid(f"task {self.task} is trained with its own loss; use --method ey")
        if self.k < 1:
            raise ConfigInvalid("K must be positive")
        if not self.lr > 0:
            raise ConfigInvalid("lr must be positive")
        if self.jitter < 0:
            raise ConfigInvalid("jitter must be non-negative")
        if self.seed < 0:
            raise ConfigInvalid("seed must be non-negative")
        if self.steps is not None and self.steps < 0:
            raise ConfigInvalid("steps must be non-negative")
        if self.epochs is not None and self.epochs < 0:
            raise ConfigInvalid("epochs must be non-negative")
        if self.steps is not None and self.epochs is not None:
            raise ConfigInvalid("give either steps or epochs, not both")
        if self.epochs is not None and self.batch_size is None:
            raise ConfigInvalid("epochs require a batch size")
        if self.batch_size is not None and self.batch_size < 2:
            raise ConfigInvalid("batch size must be at least 2")
        if self.alpha is not None and any(not 0.0 <= a <= 1.0 for a in self.alpha):
            raise ConfigInvalid("alpha entries must lie in [0, 1]")
        if self.optimizer not in ("sgd", "momentum", "adam"):
            raise ConfigInvalid("optimizer must be sgd, momentum or adam")
        if not self.inputs:
            raise ConfigInvalid("no input files given")
        if self.task == "gep" and len(self.inputs) != 2:
            raise ConfigInvalid("task gep needs exactly two inputs (A and B)")
        if self.task in ("cca", "pls", "vicreg", "bt") and len(self.inputs) != 2:
            raise ConfigInvalid(f"task {self.task} needs exactly two views")
        if self.task in ("mcca", "deep") and len(self.inputs) < 2:
            raise ConfigInvalid(f"task {self.task} needs at least two views")
        return self


def _fmt(x):
    if x is None:
        return ""
    x = float(x)
    if np.isnan(x):
        return "nan"
    return f"{x:.17g}"


class MetricsWriter:
    def __init__(self, path, cfg):
        self.fh = open(path, "w", encoding="utf-8", newline="\n")
        self.fh.write(f"# {CSV_VERSION} method={cfg.method} task={cfg.task} k={cfg.k} seed={cfg.seed}\n")
        self.fh.write(",".join(COLUMNS) + "\n")

    def row(self, t, loss=None, reward=None, norm=None, orth=None, pcc=None, tcc=None, tmcc=None):
        vals = [str(int(t))] + [_fmt(v) for v in (loss, reward, norm, orth, pcc, tcc, tmcc)]
        self.fh.write(",".join(vals) + "\n")

    def close(self):
        self.fh.close()


def _alpha_for(cfg, n_views):
    if cfg.alpha is not None:
        a = np.broadcast_to(np.asarray(cfg.alpha, dtype=np.float64), (n_views,))
        return tuple(float(x) for x in a)
    return (1.0,) * n_views if cfg.task == "pls" else (0.0,) * n_views


def load_views(paths):
    return MultiviewBatch(tuple(read_matrix(p) for p in paths))


def _n_steps(cfg, n_samples):
    if cfg.epochs is not None:
        return cfg.epochs * max(n_samples // cfg.batch_size, 1)
    return 0 if cfg.steps is None else cfg.steps


def _safe(fn, *args):
    try:
        return fn(*args)
    except (EyGepError, np.linalg.LinAlgError, FloatingPointError):
        return float("nan")


class _EigenMetrics:
    """Full-batch diagnostics for weights on the CCA-family tasks."""

    def __init__(self, data, val, alpha, k, jitter):
        self.data = data
        self.val = val
        self.alpha = alpha
        self.k = k
        self.oracle, _ = cca_exact(data, k, alpha, jitter)

    def __call__(self, weights):
        ev = ey_loss_stochastic(self.data, self.data, weights)
        pcc = _safe(lambda w: metric_pcc(learned_spectrum(self.data, w), self.oracle), weights)
        zs = weights.transform(self.val)
        tcc = _safe(metric_tcc, zs[0], zs[1], self.k) if len(zs) == 2 else float("nan")
        tmcc = _safe(metric_tmcc, zs, self.k)
        return ev, pcc, tcc, tmcc


def train_method(data, k, method, lr, steps, seed=0, batch_size=None, alpha=None, optimizer="sgd",
                 iid=False, callback=None):
    """Fit top-K weights on ``data`` with ``ey``, ``sgha`` or ``geigengame``.

    Every step touches the data only through O(M D K) products. ``callback(t, w)``
    sees the stacked weights before the first step (t = 0) and after each step.
    Returns the final WeightSet.
    """
    if method not in METHODS:
        raise ConfigInvalid(f"unknown method {method!r}")
    alpha = _as_alpha(alpha, data.n_views)
    rng = make_rng(seed)
    dims = data.dims
    w = init_weights(sum(dims), k, rng)
    if method == "geigengame":
        w = retract(w)
    sampler = None if batch_size is None else BatchPairSampler(data, batch_size, rng, iid)
    opt = OptimizerState(optimizer, lr)
    geg = GammaEgState()
    if callback is not None:
        callback(0, w)
    for t in range(1, steps + 1):
        b1, b2 = (data, data) if sampler is None else sampler.next()
        if method == "ey":
            ev = ey_loss_stochastic(b1, b2, WeightSet.from_stacked(w, dims, alpha))
            w = step(opt, w, ev.gradient)
        elif method == "sgha":
            a1, bb1 = covariance_ops(b1, alpha)
            a2, _ = covariance_ops(b2, alpha)
            w = sgha_update(w, a1, bb1, a2, lr)
        else:
            a1, _ = covariance_ops(b1, alpha)
            _, bb2 = covariance_ops(b2, alpha)
            w, geg = gamma_eg_update(w, geg, a1, bb2, lr)
        if callback is not None:
            callback(t, w)
    return WeightSet.from_stacked(w, dims, alpha)


def _run_eigen_data(cfg, data, val, writer):
    alpha = _alpha_for(cfg, data.n_views)
    metrics = _EigenMetrics(data, val, alpha, cfg.k, cfg.jitter)
    last = {}

    def record(t, u):
        ws = WeightSet.from_stacked(u, data.dims, alpha)
        ev, pcc, tcc, tmcc = metrics(ws)
        writer.row(t, ev.loss, ev.reward, ev.norm_penalty, ev.orth_penalty, pcc, tcc, tmcc)
        last["pcc"] = pcc

    ws = train_method(data, cfg.k, cfg.method, cfg.lr, _n_steps(cfg, data.n_samples), cfg.seed,
                      cfg.batch_size, alpha, cfg.optimizer, cfg.iid, record)
    return ws.views, {"pcc": last["pcc"]}


def _run_gep(cfg, pair, writer):
    rng = make_rng(cfg.seed)
    vals, _ = gep_solve(pair, cfg.k, cfg.jitter)
    w = init_weights(pair.dim, cfg.k, rng)
    if cfg.method == "geigengame":
        w = retract(w)
    opt = OptimizerState(cfg.optimizer, cfg.lr)
    geg = GammaEgState()
    steps = 0 if cfg.steps is None else cfg.steps

    def record(t, u):
        ev = ey_loss(pair, u)
        pcc = _safe(lambda x: metric_pcc(extract_spectrum(pair, x)[0], vals), u)
        writer.row(t, ev.loss, ev.reward, ev.norm_penalty, ev.orth_penalty, pcc, None, None)
        return ev, pcc

    ev, pcc = record(0, w)
    for t in range(1, steps + 1):
        if cfg.method == "ey":
            w = step(opt, w, ev.gradient)
        elif cfg.method == "sgha":
            w = sgha_update(w, pair.A, pair.B, pair.A, cfg.lr)
        else:
            w, geg = gamma_eg_update(w, geg, pair.A, pair.B, cfg.lr)
        ev, pcc = record(t, w)
    return [w], {"pcc": pcc}


def _run_ssl(cfg, data, writer):
    rng = make_rng(cfg.seed)
    bs = [init_weights(dd, cfg.k, rng) for dd in data.dims]
    opt = OptimizerState(cfg.optimizer, cfg.lr)
    params = VicregParams(cfg.extra.get("vr_alpha", 1.0), cfg.beta, cfg.extra.get("vr_gamma", 1.0))
    steps = _n_steps(cfg, data.n_samples)

    def evaluate(b):
        if cfg.task == "vicreg":
            loss, g = vicreg_loss(data, b, params)
        else:
            res = barlow_twins_loss(data, b, cfg.beta)
            loss, g = res.loss, res.gradient
        zs = [x @ w for x, w in zip(data.views, b)]
        return loss, g, _safe(metric_tcc, zs[0], zs[1], cfg.k)

    def normalise(b):
        # Barlow Twins is constrained to unit-variance outputs
        out = []
        for x, w in zip(data.views, b):
            sd = np.std(x @ w, axis=0, ddof=1)
            out.append(w / np.where(sd > 0, sd, 1.0))
        return out

    if cfg.task == "bt":
        bs = normalise(bs)
    loss, g, tcc = evaluate(bs)
    writer.row(0, loss, None, None, None, None, tcc, None)
    for t in range(1, steps + 1):
        bs = step(opt, bs, g)
        if cfg.task == "bt":
            bs = normalise(bs)
        loss, g, tcc = evaluate(bs)
        writer.row(t, loss, None, None, None, None, tcc, None)
    return bs, {"tcc": tcc}


def _run_deep(cfg, data, val, writer):
    opt = OptimizerState(cfg.optimizer, cfg.lr)
    steps = _n_steps(cfg, data.n_samples)
    res = train_deep(data, cfg.k, tuple(cfg.hidden), cfg.extra.get("tied", False), opt, steps,
                     cfg.seed, cfg.batch_size, holdout=val)
    for t, loss in enumerate(res.losses):
        writer.row(t, loss)
    writer.row(len(res.losses), None, None, None, None, None, res.tcc, None)
    weights = []
    for m in res.models:
        for layer in m.layers:
            weights.extend([layer.weight, layer.bias[None, :]])
    return weights, {"tcc": res.tcc, "ey_gap": res.ey_gap}


def run(cfg):
    """Execute one configured run; writes ``metrics.csv`` and weight files into ``cfg.out``.

    Returns a summary dict with the final metrics.
    """
    cfg.validate()
    if cfg.out is None:
        raise ConfigInvalid("no output directory given")
    os.makedirs(cfg.out, exist_ok=True)
    writer = MetricsWriter(os.path.join(cfg.out, "metrics.csv"), cfg)
    try:
        if cfg.task == "gep":
            a, b = (read_matrix(p) for p in cfg.inputs)
            pair = GepPair(a, b, check_pd=cfg.jitter == 0.0)
            weights, summary = _run_gep(cfg, pair, writer)
        else:
            data = load_views(cfg.inputs)
            val = load_views(cfg.val_inputs) if cfg.val_inputs else data
            if cfg.task in ("vicreg", "bt"):
                weights, summary = _run_ssl(cfg, data, writer)
            elif cfg.task == "deep":
                weights, summary = _run_deep(cfg, data, val, writer)
            else:
                if cfg.task == "mcca" and data.n_views < 2:
                    raise ConfigInvalid("mcca needs at least two views")
                weights, summary = _run_eigen_data(cfg, data, val, writer)
    finally:
        writer.close()
    for i, w in enumerate(weights):
        write_matrix(os.path.join(cfg.out, f"weights_{i}.gepm"), w)
    return summary


def oracle_gep(cfg):
    """Exact spectrum for a CCA-family configuration (used by the CLI summary)."""
    data = load_views(cfg.inputs)
    alpha = _alpha_for(cfg, data.n_views)
    return gep_solve(build_gep(data, alpha, check_pd=cfg.jitter == 0.0), cfg.k, cfg.jitter)[0]
