import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fd_grad, random_spd, rel_err
from eygep.cca import build_gep
from eygep.errors import ShapeMismatch, SingularProjection, TooFewSamples
from eygep.ey import (
    BatchPairSampler,
    ey_gradient_update,
    ey_loss,
    ey_loss_stochastic,
    ey_step_size,
    ey_stochastic_direction,
    extract_spectrum,
    train,
    train_restarts,
)
from eygep.linalg import GepPair, gep_solve, principal_angles
from eygep.optim import OptimizerState
from eygep.rng import make_rng, random_orthogonal
from eygep.synthetic import gen_gaussian, random_gep
from eygep.views import MultiviewBatch, WeightSet


def _random_pair(rng, d):
    a = rng.standard_normal((d, d))
    return GepPair(a + a.T, random_spd(rng, d))


def test_loss_identity_pencil():
    ev = ey_loss(GepPair(np.eye(2), np.eye(2)), np.eye(2))
    assert ev.loss == pytest.approx(-2.0)
    assert ev.reward == pytest.approx(4.0)
    assert ev.norm_penalty == pytest.approx(2.0)
    assert ev.orth_penalty == 0.0


def test_loss_zero_weights():
    ev = ey_loss(GepPair(np.diag([3.0, 1.0]), np.eye(2)), np.zeros((2, 1)))
    assert ev.loss == 0.0
    np.testing.assert_array_equal(ev.gradient, 0.0)


def test_loss_scaled_top_eigenvector():
    ev = ey_loss(GepPair(np.diag([3.0, 1.0]), np.eye(2)), np.array([[np.sqrt(3.0)], [0.0]]))
    assert ev.loss == pytest.approx(-9.0, abs=1e-13)


def test_loss_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        ey_loss(GepPair(np.eye(3), np.eye(3)), np.ones((2, 1)))


@pytest.mark.parametrize("seed", range(10))
def test_decomposition_and_optimum(seed):
    rng = make_rng(seed)
    d = int(rng.integers(3, 10))
    k = int(rng.integers(1, d))
    pair, _ = random_gep(d, k, rng)
    u = rng.standard_normal((d, k))
    ev = ey_loss(pair, u)
    assert abs(ev.loss - (-ev.reward + ev.norm_penalty + ev.orth_penalty)) <= 1e-12 * max(1, abs(ev.loss))
    ubu = u.T @ pair.B @ u
    off = sum(ubu[l, j] ** 2 for j in range(k) for l in range(j))
    assert ev.orth_penalty == pytest.approx(2 * off, rel=1e-12, abs=1e-14)
    vals, uk = gep_solve(pair, k)
    o = random_orthogonal(k, rng)
    opt = ey_loss(pair, uk * np.sqrt(vals) @ o)
    assert opt.loss == pytest.approx(-np.sum(vals ** 2), rel=1e-8)


@pytest.mark.parametrize("seed", range(50))
def test_gradient_matches_fd(seed):
    rng = make_rng(1000 + seed)
    d, k = 5, 3
    pair = _random_pair(rng, d)
    u = rng.standard_normal((d, k))
    g = ey_loss(pair, u).gradient
    fd = fd_grad(lambda x: ey_loss(pair, x).loss, u, h=1e-5)
    assert rel_err(g, fd) <= 1e-5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rotation_invariance(seed):
    rng = make_rng(seed)
    d = int(rng.integers(2, 8))
    k = int(rng.integers(1, d + 1))
    pair = _random_pair(rng, d)
    u = rng.standard_normal((d, k))
    o = random_orthogonal(k, rng)
    l1, l2 = ey_loss(pair, u).loss, ey_loss(pair, u @ o).loss
    assert abs(l1 - l2) <= 1e-10 * max(1.0, abs(l1))


def _two_view_data(seed, n=40, dims=(3, 4)):
    return gen_gaussian(dims, 2, (0.8, 0.4), n, seed).batch


@pytest.mark.parametrize("alpha", [0.0, 0.3, 1.0, (0.2, 0.7)])
def test_stochastic_reduces_to_plugin(alpha):
    batch = _two_view_data(0)
    rng = make_rng(5)
    w = WeightSet((rng.standard_normal((3, 2)), rng.standard_normal((4, 2))), alpha)
    ev = ey_loss_stochastic(batch, batch, w)
    pair = build_gep(batch, alpha)
    ref = ey_loss(pair, w.stacked())
    assert ev.loss == pytest.approx(ref.loss, rel=1e-12)
    assert ev.reward == pytest.approx(ref.reward, rel=1e-12)
    np.testing.assert_allclose(ev.gradient, ref.gradient, atol=1e-12 * np.max(np.abs(ref.gradient)))


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_stochastic_gradient_fd(alpha):
    b1 = _two_view_data(1, n=15)
    b2 = _two_view_data(2, n=12)
    rng = make_rng(7)
    u = rng.standard_normal((7, 2))
    dims = (3, 4)

    def f(x):
        return ey_loss_stochastic(b1, b2, WeightSet.from_stacked(x, dims, alpha)).loss

    g = ey_loss_stochastic(b1, b2, WeightSet.from_stacked(u, dims, alpha)).gradient
    assert rel_err(g, fd_grad(f, u, h=1e-5)) <= 1e-5


def test_stochastic_errors():
    b = _two_view_data(0)
    w = WeightSet((np.ones((3, 1)), np.ones((4, 1))))
    with pytest.raises(TooFewSamples):
        ey_loss_stochastic(b.take(np.array([0])), b, w)
    with pytest.raises(ShapeMismatch):
        ey_loss_stochastic(b, b, WeightSet((np.ones((2, 1)), np.ones((4, 1)))))


def test_update_conventions():
    rng = make_rng(3)
    pair = _random_pair(rng, 4)
    u = rng.standard_normal((4, 2))
    a, b = pair.A, pair.B
    np.testing.assert_array_equal(ey_gradient_update(u, a, b, b, 0.0), u)
    # B = B' reduces to the deterministic ascent row with the consistent sign
    stepped = ey_gradient_update(u, a, b, b, 0.01)
    expected = u + 2 * 0.01 * (2 * a @ u - 2 * b @ u @ (u.T @ b @ u))
    np.testing.assert_allclose(stepped, expected, atol=1e-13)
    np.testing.assert_allclose(ey_stochastic_direction(u, a, b, b), ey_loss(pair, u).gradient, atol=1e-12)
    with pytest.raises(ShapeMismatch):
        ey_stochastic_direction(u, np.eye(3), b, b)


def test_sampler_epoch_pairs_are_disjoint_and_cover():
    batch = _two_view_data(0, n=40)
    s = BatchPairSampler(batch, 10, make_rng(0))
    assert s.steps_per_epoch == 4
    seen = []
    for _ in range(4):
        b1, b2 = s.next()
        assert b1.n_samples == b2.n_samples == 10
        r1 = {tuple(r) for r in b1.views[0]}
        r2 = {tuple(r) for r in b2.views[0]}
        assert not r1 & r2
        seen.extend(r1)
    assert len(set(seen)) == 40
    with pytest.raises(TooFewSamples):
        BatchPairSampler(batch, 30, make_rng(0))


def test_train_diag_example():
    pair = GepPair(np.diag([3.0, 2.0, 1.0]), np.eye(3))
    u, trace = train(pair, 2, OptimizerState("sgd", lr=1e-2), steps=5000, seed=0)
    assert ey_loss(pair, u).loss == pytest.approx(-13.0, abs=1e-4)
    assert len(trace) == 5000


def test_train_steps_zero_and_determinism():
    pair = GepPair(np.diag([3.0, 2.0, 1.0]), np.eye(3))
    init = make_rng(4).standard_normal((3, 2))
    u, trace = train(pair, 2, steps=0, init=init)
    np.testing.assert_array_equal(u, init)
    assert trace == []
    data = _two_view_data(3, n=200)
    w1, t1 = train(data, 2, OptimizerState("sgd", lr=0.05), steps=30, seed=9, batch_size=20)
    w2, t2 = train(data, 2, OptimizerState("sgd", lr=0.05), steps=30, seed=9, batch_size=20)
    np.testing.assert_array_equal(w1.stacked(), w2.stacked())
    assert [e.loss for e in t1] == [e.loss for e in t2]


def test_train_restarts_no_spurious_minima():
    rng = make_rng(11)
    pair, _ = random_gep(8, 3, rng)
    vals, _ = gep_solve(pair, 3)
    _, losses = train_restarts(pair, 3, 20, 4000, ey_step_size(pair), seed=2)
    assert np.max(np.abs(losses + np.sum(vals ** 2))) <= 1e-3


def test_train_on_data_reaches_cca_subspace():
    data = _two_view_data(4, n=2000)
    w, _ = train(data, 2, OptimizerState("sgd", lr=0.05), steps=2000, seed=0)
    pair = build_gep(data)
    vals, u = gep_solve(pair, 2)
    ext, _ = extract_spectrum(pair, w.stacked())
    np.testing.assert_allclose(ext, vals, atol=1e-6)
    assert np.max(principal_angles(w.stacked(), u, inner=pair.B)) <= 1e-3


def test_extract_spectrum_examples():
    rng = make_rng(8)
    pair, _ = random_gep(6, 3, rng)
    vals, u = gep_solve(pair, 3)
    ext, dirs = extract_spectrum(pair, u * np.sqrt(vals))
    np.testing.assert_allclose(ext, vals, atol=1e-8)
    np.testing.assert_allclose(dirs.T @ pair.B @ dirs, np.eye(3), atol=1e-10)
    ext2, _ = extract_spectrum(pair, u @ rng.standard_normal((3, 3)))
    np.testing.assert_allclose(ext2, vals, atol=1e-8)
    with pytest.raises(SingularProjection):
        extract_spectrum(pair, np.zeros((6, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_extract_spectrum_interlaces(seed):
    rng = make_rng(seed)
    d = int(rng.integers(2, 9))
    k = int(rng.integers(1, d + 1))
    pair = _random_pair(rng, d)
    vals, _ = gep_solve(pair, k)
    ext, _ = extract_spectrum(pair, rng.standard_normal((d, k)))
    assert np.all(ext <= vals + 1e-8 * max(1.0, np.max(np.abs(vals))))


def test_evaluation_decomposition_on_batch():
    batch = MultiviewBatch((np.arange(6.0).reshape(3, 2), np.array([[1.0], [0.0], [2.0]])))
    w = WeightSet((np.ones((2, 1)), np.ones((1, 1))))
    ev = ey_loss_stochastic(batch, batch, w)
    assert abs(ev.loss - (-ev.reward + ev.norm_penalty + ev.orth_penalty)) <= 1e-12 * max(1, abs(ev.loss))
