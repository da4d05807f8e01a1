import numpy as np
import pytest

from conftest import fd_grad, rel_err
from eygep.cca import cca_exact, fast_linear_gradient, learned_spectrum, metric_pcc
from eygep.deep import Layer, Mlp, backward_ey, forward, recovery_gap, train_deep
from eygep.errors import ConfigInvalid, ShapeMismatch
from eygep.optim import OptimizerState
from eygep.rng import make_rng
from eygep.synthetic import gen_gaussian
from eygep.views import MultiviewBatch, WeightSet


def _linear(w, b=None):
    return Mlp([Layer(w, np.zeros(w.shape[1]) if b is None else b, "identity")])


def test_forward_examples():
    x = make_rng(0).standard_normal((5, 3))
    np.testing.assert_array_equal(forward(_linear(np.eye(3)), x)[0], x)
    out, _ = forward(_linear(np.zeros((3, 2)), np.array([1.0, -2.0])), x)
    np.testing.assert_array_equal(out, np.tile([1.0, -2.0], (5, 1)))
    net = Mlp.init((3, 8, 8, 2), make_rng(1))
    assert np.all(np.isfinite(forward(net, x)[0]))
    with pytest.raises(ShapeMismatch):
        forward(net, np.ones((2, 4)))


def test_mlp_validation():
    with pytest.raises(ConfigInvalid):
        Mlp([Layer(np.eye(2), np.zeros(2), "relu")])
    with pytest.raises(ShapeMismatch):
        Mlp([Layer(np.eye(2), np.zeros(3), "identity")])
    with pytest.raises(ShapeMismatch):
        Mlp([Layer(np.eye(2), np.zeros(2), "relu"), Layer(np.eye(3), np.zeros(3), "identity")])
    with pytest.raises(ConfigInvalid):
        Mlp([Layer(np.eye(2), np.zeros(2), "tanh"), Layer(np.eye(2), np.zeros(2), "identity")])


@pytest.mark.parametrize("seed", range(5))
def test_linear_nets_reduce_to_fast_gradient(seed):
    rng = make_rng(seed)
    dims = (4, 3)
    b1 = MultiviewBatch(tuple(rng.standard_normal((15, d)) for d in dims))
    b2 = MultiviewBatch(tuple(rng.standard_normal((11, d)) for d in dims))
    ws = [rng.standard_normal((d, 2)) for d in dims]
    nets = [_linear(w, rng.standard_normal(2)) for w in ws]
    _, grads = backward_ey(nets, b1, b2)
    fast = fast_linear_gradient(b1, b2, WeightSet(tuple(ws)))
    for (gw, gb), f in zip(grads, fast):
        assert np.max(np.abs(gw - f)) <= 1e-10
        assert np.max(np.abs(gb)) <= 1e-10


def _flat_fd_check(nets, b1, b2):
    # relative error over all parameters at once; output biases have zero
    # gradient, so per-array relative errors would be pure noise
    loss, grads = backward_ey(nets, b1, b2)
    ana, num = [], []
    for ni, net in enumerate(nets):
        for pi, p in enumerate(net.params()):
            def f(x, ni=ni, pi=pi):
                ps = list(nets[ni].params())
                ps[pi] = x
                trial = list(nets)
                trial[ni] = nets[ni].with_params(ps)
                return backward_ey(trial, b1, b2)[0]
            ana.append(grads[ni][pi].ravel())
            num.append(fd_grad(f, p, h=1e-6).ravel())
    return rel_err(np.concatenate(ana), np.concatenate(num))


@pytest.mark.parametrize("seed", range(20))
def test_backward_matches_fd(seed):
    rng = make_rng(100 + seed)
    dims = (3, 2)
    b1 = MultiviewBatch(tuple(rng.standard_normal((10, d)) for d in dims))
    b2 = MultiviewBatch(tuple(rng.standard_normal((8, d)) for d in dims))
    nets = [Mlp.init((d, 5, 2), rng) for d in dims]
    nets = [n.with_params([p + 0.1 * rng.standard_normal(p.shape) for p in n.params()]) for n in nets]
    assert _flat_fd_check(nets, b1, b2) <= 1e-4


def test_tied_gradient_is_sum():
    rng = make_rng(7)
    b1 = MultiviewBatch(tuple(rng.standard_normal((10, 3)) for _ in range(2)))
    b2 = MultiviewBatch(tuple(rng.standard_normal((9, 3)) for _ in range(2)))
    net = Mlp.init((3, 4, 2), rng)
    _, grads = backward_ey([net, net], b1, b2)

    def f(x):
        tied = net.with_params([x] + net.params()[1:])
        return backward_ey([tied, tied], b1, b2)[0]

    assert rel_err(grads[0][0], fd_grad(f, net.params()[0], h=1e-6)) <= 1e-4
    assert grads[0] is grads[1]


def test_zero_data_gives_zero_gradients():
    zeros = MultiviewBatch((np.zeros((6, 3)), np.zeros((6, 2))))
    nets = [Mlp.init((3, 4, 2), make_rng(1)), Mlp.init((2, 4, 2), make_rng(2))]
    loss, grads = backward_ey(nets, zeros, zeros)
    assert loss == 0.0
    for g in grads:
        for p in g:
            np.testing.assert_array_equal(p, 0.0)


def test_alpha_must_be_zero():
    b = MultiviewBatch((np.ones((3, 2)) * np.arange(3)[:, None], np.arange(3.0)[:, None]))
    with pytest.raises(ConfigInvalid):
        backward_ey([Mlp.init((2, 1), make_rng(0)), Mlp.init((1, 1), make_rng(0))], b, b, alpha=0.5)


def test_steps_zero_returns_initial_nets():
    data = gen_gaussian((3, 3), 1, (0.8,), 50, 0).batch
    res = train_deep(data, 1, hidden=(4,), steps=0, seed=3)
    rng = make_rng(3)
    ref = [Mlp.init((3, 4, 1), rng), Mlp.init((3, 4, 1), rng)]
    for m, r in zip(res.models, ref):
        for p, q in zip(m.params(), r.params()):
            np.testing.assert_array_equal(p, q)
    assert res.losses == []


def test_linear_recovery_of_cca():
    inst = gen_gaussian((6, 5), 3, (0.9, 0.7, 0.5), 3000, 1)
    oracle, _ = cca_exact(inst.batch, 3)
    res = train_deep(inst.batch, 3, steps=3000, optimizer=OptimizerState("sgd", lr=0.05), seed=0)
    ws = WeightSet(tuple(m.layers[0].weight for m in res.models))
    assert metric_pcc(learned_spectrum(inst.batch, ws), oracle) >= 0.98
    gap, _ = recovery_gap(res.models, inst.batch)
    assert gap <= 1e-3


def _nonlinear_instance(n, seed):
    rng = make_rng(seed)
    s = rng.standard_normal(n)
    x1 = np.column_stack([s, rng.standard_normal(n) ** 2])
    x2 = np.column_stack([s ** 2 - 1 + 0.1 * rng.standard_normal(n), rng.standard_normal(n) ** 2])
    return MultiviewBatch((x1, x2))


def test_deep_beats_linear_on_nonlinear_link():
    train = _nonlinear_instance(4000, 0)
    val = _nonlinear_instance(2000, 1)
    opt = lambda: OptimizerState("adam", lr=3e-3)  # noqa: E731
    deep = train_deep(train, 1, hidden=(32, 32), optimizer=opt(), steps=1500, batch_size=200, holdout=val)
    lin = train_deep(train, 1, optimizer=opt(), steps=1500, batch_size=200, holdout=val)
    assert deep.tcc >= lin.tcc + 0.1
