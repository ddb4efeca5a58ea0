import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from powercql.core import DEFAULT_GRID, NodeState
from powercql.qnet import Adam, NonFiniteError, QNetwork, feature_stats, optimizer_step


def batch(seed=0, n=8):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, (n, 5)), rng.standard_normal((n, 16))


def test_zero_net_outputs_zero():
    net = QNetwork.zeros()
    q = net.forward(NodeState(0.3, 100.0, 0.5, 0.5, 0.5))
    assert q.shape == (16,) and not q.any()


def test_init_shape_bounds_and_determinism():
    a, b = QNetwork.init(seed=4), QNetwork.init(seed=4)
    assert a.params.size == 346
    np.testing.assert_array_equal(a.params, b.params)
    assert not np.array_equal(a.params, QNetwork.init(seed=5).params)
    first = a.params[:60]  # 5 -> 10 layer, fan-in 5
    assert np.all(np.abs(first) <= 1 / np.sqrt(5))
    x, _ = batch()
    np.testing.assert_array_equal(a.forward_batch(x), b.forward_batch(x))


def test_standardization_is_applied():
    x, _ = batch(n=20)
    mean, std = feature_stats(x)
    raw = QNetwork.init(seed=1)
    std_net = QNetwork(raw.dims, raw.params, mean, std)
    np.testing.assert_allclose(std_net.forward_batch(x), raw.forward_batch((x - mean) / std))


def test_constant_feature_gets_unit_std():
    x = np.ones((4, 5))
    x[:, 0] = [0, 1, 2, 3]
    _, std = feature_stats(x)
    assert std[1:].tolist() == [1.0] * 4


def test_gradient_matches_finite_differences():
    x, dq = batch()
    net = QNetwork.init(seed=2, feature_mean=x.mean(0), feature_std=x.std(0))
    g = net.backward(x, dq)
    h = 1e-5
    for i in range(0, net.params.size, 7):
        p = net.params.copy()
        p[i] += h
        up = np.sum(dq * QNetwork(net.dims, p, net.feature_mean, net.feature_std).forward_batch(x))
        p[i] -= 2 * h
        dn = np.sum(dq * QNetwork(net.dims, p, net.feature_mean, net.feature_std).forward_batch(x))
        assert g[i] == pytest.approx((up - dn) / (2 * h), abs=1e-4)


def test_zero_upstream_gives_zero_gradient():
    x, dq = batch()
    assert not QNetwork.init().backward(x, np.zeros_like(dq)).any()


@given(st.integers(0, 1000))
def test_gradient_is_additive_over_batches(seed):
    x, dq = batch(seed, 10)
    net = QNetwork.init(seed=seed)
    whole = net.backward(x, dq)
    parts = net.backward(x[:4], dq[:4]) + net.backward(x[4:], dq[4:])
    np.testing.assert_allclose(whole, parts, atol=1e-12)


def test_adam_with_zero_gradient_is_a_no_op():
    net = QNetwork.init(seed=3)
    before = net.params.copy()
    opt = Adam(net.params.size, lr=1e-2)
    for _ in range(5):
        optimizer_step(net, np.zeros_like(before), opt)
    np.testing.assert_array_equal(net.params, before)


def test_adam_descends_a_quadratic():
    x, _ = batch(n=16)
    net = QNetwork.init(seed=0)
    opt = Adam(net.params.size, lr=1e-2)
    losses = []
    for _ in range(100):
        q = net.forward_batch(x)
        losses.append(0.5 * np.mean(q**2))
        optimizer_step(net, net.backward(x, q / q.size * 16), opt)
    assert losses[-1] < 0.1 * losses[0]


def test_non_finite_guards():
    net = QNetwork.init()
    opt = Adam(net.params.size)
    with pytest.raises(NonFiniteError):
        optimizer_step(net, np.full(net.params.size, np.nan), opt)
    with pytest.raises(ValueError):
        net.forward_batch(np.full((1, 5), np.inf))
    with pytest.raises(NonFiniteError):
        optimizer_step(net, np.ones(net.params.size), opt, lr=np.inf)


def test_constructor_validation():
    with pytest.raises(ValueError):
        QNetwork((5, 16), np.zeros(3))
    with pytest.raises(ValueError):
        QNetwork((5, 16), np.zeros(96), activation="tanh")
    with pytest.raises(ValueError):
        QNetwork((5, 16), np.zeros(96), feature_std=np.zeros(5))


def test_checkpoint_roundtrip():
    x, _ = batch()
    net = QNetwork.init(seed=9, feature_mean=x.mean(0), feature_std=x.std(0))
    back = QNetwork.from_checkpoint(net.to_checkpoint(DEFAULT_GRID, {"alpha": 0.1}))
    np.testing.assert_array_equal(back.forward_batch(x), net.forward_batch(x))
