"""Small ReLU perceptrons trained with the two-batch EY loss.

Gradients are computed by hand: the loss is differentiated with respect to the
representations through the centred covariance layer, then back-propagated
through each network.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cca import metric_tcc, representation_spectrum
from .ey import BatchPairSampler
from .errors import ConfigInvalid, ShapeMismatch, TooFewSamples
from .linalg import as_matrix, center
from .optim import OptimizerState, step
from .rng import make_rng
from .views import MultiviewBatch

ACTIVATIONS = ("relu", "identity")


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"


class Mlp:
    """Layers ``h <- act(h W + b)``; the last layer is always linear."""

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ShapeMismatch("an MLP needs at least one layer")
        for i, layer in enumerate(layers):
            if layer.activation not in ACTIVATIONS:
                raise ConfigInvalid(f"unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.weight.shape[1],):
                raise ShapeMismatch(f"layer {i}: bias does not match weight columns")
            if i and layers[i - 1].weight.shape[1] != layer.weight.shape[0]:
                raise ShapeMismatch(f"layer {i}: input width does not chain")
        if layers[-1].activation != "identity":
            raise ConfigInvalid("the final layer must be linear")
        self.layers = layers

    @classmethod
    def init(cls, widths, rng):
        """Gaussian weights scaled by 1/sqrt(fan-in), zero biases."""
        layers = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            act = "identity" if i == len(widths) - 2 else "relu"
            layers.append(Layer(rng.standard_normal((a, b)) / np.sqrt(a), np.zeros(b), act))
        return cls(layers)

    @property
    def in_dim(self):
        return self.layers[0].weight.shape[0]

    @property
    def out_dim(self):
        return self.layers[-1].weight.shape[1]

    def params(self):
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def with_params(self, params):
        layers = [Layer(params[2 * i], params[2 * i + 1], layer.activation)
                  for i, layer in enumerate(self.layers)]
        return Mlp(layers)


def forward(mlp, x):
    """Outputs and the per-layer inputs / pre-activations needed by :func:`backward`."""
    h = as_matrix(x, "X")
    if h.shape[1] != mlp.in_dim:
        raise ShapeMismatch(f"input width {h.shape[1]} does not match network {mlp.in_dim}")
    cache = []
    for layer in mlp.layers:
        pre = h @ layer.weight + layer.bias
        cache.append((h, pre))
        h = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
    return h, cache


def backward(mlp, cache, grad_out):
    """Parameter gradients (weight, bias per layer) given dLoss/dOutput."""
    grads = [None] * (2 * len(mlp.layers))
    g = grad_out
    for i in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[i]
        h, pre = cache[i]
        if layer.activation == "relu":
            g = g * (pre > 0)
        grads[2 * i] = h.T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weight.T
    return grads


def ey_representation_loss(zs, zs2):
    """Two-batch EY loss of representations (no ridge) and its gradients w.r.t. each ``Z``."""
    zc = [center(z) for z in zs]
    zc2 = [center(z) for z in zs2]
    n = zs[0].shape[0] - 1
    n2 = zs2[0].shape[0] - 1
    if n < 1 or n2 < 1:
        raise TooFewSamples("each batch needs at least 2 samples")
    s = sum(zc)
    v = sum(z.T @ z for z in zc) / n
    v2 = sum(z.T @ z for z in zc2) / n2
    tr_c = (float(np.sum(s * s)) - sum(float(np.sum(z * z)) for z in zc)) / n
    loss = -2.0 * tr_c + float(np.sum(v * v2))
    g1 = [-4.0 * (s - z) / n + 2.0 * z @ v2 / n for z in zc]
    g2 = [2.0 * z @ v / n2 for z in zc2]
    return loss, g1, g2


def _check_alpha(alpha):
    if np.any(np.asarray(alpha) != 0):
        raise ConfigInvalid("the deep EY loss is implemented for alpha = 0 only")


def backward_ey(mlps, batch, batch2, alpha=0.0):
    """EY loss of the networks' representations and per-network parameter gradients.

    ``mlps`` holds one network per view; passing the same object for every
    view ties the weights, and its gradients are then summed.
    """
    _check_alpha(alpha)
    if len(mlps) != batch.n_views or len(mlps) != batch2.n_views:
        raise ShapeMismatch("need one network per view")
    fw = [forward(m, x) for m, x in zip(mlps, batch.views)]
    fw2 = [forward(m, x) for m, x in zip(mlps, batch2.views)]
    loss, g1, g2 = ey_representation_loss([f[0] for f in fw], [f[0] for f in fw2])
    grads = {}
    for m, (_, c), g, (_, c2), gg in zip(mlps, fw, g1, fw2, g2):
        pg = [a + b for a, b in zip(backward(m, c, g), backward(m, c2, gg))]
        key = id(m)
        grads[key] = pg if key not in grads else [a + b for a, b in zip(grads[key], pg)]
    return loss, [grads[id(m)] for m in mlps]


def _unique(mlps):
    seen, out = set(), []
    for m in mlps:
        if id(m) not in seen:
            seen.add(id(m))
            out.append(m)
    return out


@dataclass
class DeepResult:
    models: list
    losses: list
    tcc: float
    mcca: np.ndarray
    ey_gap: float


def representations(mlps, batch):
    return [forward(m, x)[0] for m, x in zip(mlps, batch.views)]


def recovery_gap(mlps, batch):
    """``|(-L_EY) - ||MCCA_K(Z)||^2|`` on the full batch, plus the spectrum."""
    zs = representations(mlps, batch)
    loss, _, _ = ey_representation_loss(zs, zs)
    k = zs[0].shape[1]
    spec = representation_spectrum(zs, k)
    return abs(-loss - float(np.sum(spec ** 2))), spec


def train_deep(data, k, hidden=(), tied=False, optimizer=None, steps=1000, seed=0,
               batch_size=None, holdout=None):
    """Algorithm-1 loop over MLP parameters.

    ``hidden`` lists hidden widths (empty gives linear networks). With
    ``tied=True`` all views share one network (views must have equal width).
    Returns the models, the loss trace and diagnostics on ``holdout`` (or
    on the training data when no holdout is given).
    """
    if not isinstance(data, MultiviewBatch):
        raise TypeError("data must be a MultiviewBatch")
    rng = make_rng(seed)
    if tied:
        if len(set(data.dims)) != 1:
            raise ShapeMismatch("tied weights need views of equal width")
        net = Mlp.init((data.dims[0],) + tuple(hidden) + (k,), rng)
        mlps = [net] * data.n_views
    else:
        mlps = [Mlp.init((d,) + tuple(hidden) + (k,), rng) for d in data.dims]
    opt = optimizer if optimizer is not None else OptimizerState("adam", 1e-3)
    sampler = None if batch_size is None else BatchPairSampler(data, batch_size, rng)
    losses = []
    for _ in range(steps):
        b1, b2 = (data, data) if sampler is None else sampler.next()
        loss, grads = backward_ey(mlps, b1, b2)
        losses.append(loss)
        uniq = _unique(mlps)
        flat_p, flat_g, sizes = [], [], []
        for m in uniq:
            g = grads[[id(x) for x in mlps].index(id(m))]
            p = m.params()
            flat_p.extend(p)
            flat_g.extend(g)
            sizes.append(len(p))
        new = step(opt, flat_p, flat_g)
        updated, pos = {}, 0
        for m, size in zip(uniq, sizes):
            updated[id(m)] = m.with_params(new[pos:pos + size])
            pos += size
        mlps = [updated[id(m)] for m in mlps]
    evald = holdout if holdout is not None else data
    zs = representations(mlps, evald)
    tcc = metric_tcc(zs[0], zs[1], k) if len(zs) == 2 else float("nan")
    gap, spec = recovery_gap(mlps, data)
    return DeepResult(mlps, losses, tcc, spec, gap)
