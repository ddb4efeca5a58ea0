from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from powercql.core import DEFAULT_GRID, DataError, Dataset, NodeState, Transition
from powercql.cql import (
    TrainConfig,
    bellman_targets,
    cql_loss,
    cql_loss_grad,
    greedy_indices,
    is_non_increasing,
    q_penalty_monotonicity_probe,
    train,
)
from powercql.qnet import QNetwork

A = NodeState(10.0, 100.0, 0.3, 0.6, 0.9)
B = NodeState(50.0, 150.0, 0.5, 0.2, 0.1)
R_A = np.linspace(-1.0, 1.0, 16)
R_B = np.cos(np.arange(16)) * 2.0


def tr(s, a, r, s2, term, t=0):
    return Transition("mdp", t, s, a, DEFAULT_GRID.values[a], r, r, s2, term)


def two_step_mdp():
    """A --a--> B (reward R_A[a]); B --a--> end (reward R_B[a]). Every pair once."""
    rows = [tr(A, a, R_A[a], B, False, 0) for a in range(16)]
    rows += [tr(B, a, R_B[a], B, True, 1) for a in range(16)]
    return Dataset(rows, DEFAULT_GRID)


def value_iteration(gamma, sweeps=50):
    q = {"A": np.zeros(16), "B": np.zeros(16)}
    for _ in range(sweeps):
        q = {"A": R_A + gamma * q["B"].max(), "B": R_B.copy()}
    return q


def as_batch(ds):
    return ds.arrays()


# --- loss


def test_equal_q_gives_log_k_conservative_term():
    net = QNetwork.zeros()
    ds = two_step_mdp()
    tot, bell, cons = cql_loss(net, as_batch(ds), TrainConfig(alpha=1.0))
    assert cons == pytest.approx(np.log(16))
    r = as_batch(ds)["reward"]
    assert bell == pytest.approx(np.mean(r**2))
    assert tot == pytest.approx(np.log(16) + 0.5 * np.mean(r**2))


def test_alpha_zero_is_half_mse():
    net = QNetwork.init(seed=1)
    b = as_batch(two_step_mdp())
    tot, bell, _ = cql_loss(net, b, TrainConfig(alpha=0.0, gamma=0.5))
    q = net.forward_batch(b["state"])[np.arange(32), b["action"]]
    y = b["reward"] + 0.5 * (1 - b["terminal"]) * net.forward_batch(b["next_state"]).max(axis=1)
    assert bell == pytest.approx(np.mean((q - y) ** 2))
    assert tot == pytest.approx(0.5 * bell)


def test_terminal_targets_do_not_bootstrap():
    net = QNetwork.init(seed=2)
    b = as_batch(two_step_mdp())
    y = bellman_targets(net, b["reward"], b["next_state"], b["terminal"], 0.9)
    np.testing.assert_allclose(y[16:], R_B)
    assert not np.allclose(y[:16], R_A)


@given(st.integers(0, 500))
def test_conservative_term_is_non_negative(seed):
    # logsumexp dominates every entry, including the data action
    net = QNetwork.init(seed=seed)
    _, _, cons = cql_loss(net, as_batch(two_step_mdp()), TrainConfig())
    assert cons >= 0


def test_loss_grad_matches_finite_differences():
    net = QNetwork.init(seed=3)
    b = as_batch(two_step_mdp())
    cfg = TrainConfig(alpha=0.5)
    target = net.copy()  # held fixed, as in training
    _, g = cql_loss_grad(net, b, cfg, target)
    h = 1e-6
    for i in range(0, net.params.size, 11):
        up, dn = net.copy(), net.copy()
        up.params[i] += h
        dn.params[i] -= h
        fd = (cql_loss(up, b, cfg, target)[0] - cql_loss(dn, b, cfg, target)[0]) / (2 * h)
        assert g[i] == pytest.approx(fd, abs=1e-6)


def test_empty_batch_rejected():
    b = {k: v[:0] for k, v in as_batch(two_step_mdp()).items()}
    with pytest.raises(ValueError):
        cql_loss(QNetwork.zeros(), b, TrainConfig())


# --- config


@pytest.mark.parametrize(
    "bad",
    [dict(gamma=1.5), dict(gamma=-0.1), dict(alpha=-1.0), dict(batch=0), dict(iterations=0), dict(lr=0.0), dict(target_sync=0)],
)
def test_config_validation(bad):
    with pytest.raises(ValueError):
        TrainConfig(**bad)


def test_config_defaults():
    c = TrainConfig()
    assert (c.gamma, c.alpha, c.batch, c.iterations, c.lr) == (0.9, 0.1, 128, 10_000, 1e-3)
    assert c.hidden == (10, 10) and c.target_sync is None


# --- training

FAST = TrainConfig(alpha=0.0, gamma=0.5, batch=32, iterations=3000, lr=1e-2)


def test_recovers_value_iteration_on_tiny_mdp():
    rep = train(two_step_mdp(), FAST)
    oracle = value_iteration(0.5)
    qa = rep.net.forward(A)
    qb = rep.net.forward(B)
    np.testing.assert_allclose(qb, oracle["B"], atol=0.1)
    np.testing.assert_allclose(qa, oracle["A"], atol=0.1)
    assert greedy_indices(qb) == np.argmax(oracle["B"])


def test_loss_goes_down():
    rep = train(two_step_mdp(), FAST)
    assert rep.losses[-100:, 0].mean() < 0.05 * rep.losses[:100, 0].mean()


def test_training_is_deterministic():
    cfg = replace(FAST, iterations=200)
    a, b = train(two_step_mdp(), cfg), train(two_step_mdp(), cfg)
    np.testing.assert_array_equal(a.checkpoint.params, b.checkpoint.params)
    np.testing.assert_array_equal(a.losses, b.losses)
    c = train(two_step_mdp(), replace(cfg, seed=1))
    assert not np.array_equal(a.checkpoint.params, c.checkpoint.params)


def test_target_sync_every_step_equals_online_targets():
    cfg = replace(FAST, iterations=100)
    a = train(two_step_mdp(), cfg)
    b = train(two_step_mdp(), replace(cfg, target_sync=1))
    np.testing.assert_array_equal(a.checkpoint.params, b.checkpoint.params)
    c = train(two_step_mdp(), replace(cfg, target_sync=50))
    assert not np.array_equal(a.checkpoint.params, c.checkpoint.params)


def test_early_stop_on_plateau():
    rep = train(two_step_mdp(), replace(FAST, iterations=20000, early_stop_window=200))
    n = rep.checkpoint.hyperparams["iterations_run"]
    assert n < 20000 and n % 200 == 0 and len(rep.losses) == n


def test_coverage_required_by_default():
    ds = Dataset([tr(A, 3, 1.0, B, True)], DEFAULT_GRID)
    with pytest.raises(DataError, match="never samples"):
        train(ds, replace(FAST, iterations=10))
    rep = train(ds, replace(FAST, iterations=10), require_coverage=False)
    assert rep.losses.shape == (10, 3)


def test_strong_penalty_keeps_greedy_choice_in_sample():
    # only caps 3 and 7 were ever tried at A; 7 paid more. The penalty squeezes
    # the in-sample gap (to ~0.33 at this alpha) but must not flip it
    ds = Dataset([tr(A, 3, 1.0, B, True), tr(A, 7, 2.0, B, True)], DEFAULT_GRID)
    rep = train(ds, TrainConfig(alpha=2.0, batch=16, iterations=3000, lr=3e-3), require_coverage=False)
    assert greedy_indices(rep.net.forward(A)) == 7


def test_checkpoint_records_config():
    rep = train(two_step_mdp(), replace(FAST, iterations=10))
    h = rep.checkpoint.hyperparams
    assert h["gamma"] == 0.5 and h["alpha"] == 0.0 and h["hidden"] == [10, 10]
    assert rep.loss_csv().splitlines()[0] == "iter,total,bellman,conservative"
    assert len(rep.loss_csv().splitlines()) == 11


# --- probe


def test_probe_pushes_unseen_actions_down():
    rows = [tr(A, a, R_A[a], B, True) for a in (0, 5, 9)]
    rows += [tr(B, a, R_B[a], B, True) for a in range(16)]
    ds = Dataset(rows, DEFAULT_GRID)
    out = q_penalty_monotonicity_probe(ds, [0.0, 0.1, 1.0], TrainConfig(batch=16, iterations=1000, lr=1e-2))
    assert [r.alpha for r in out] == [0.0, 0.1, 1.0]
    assert is_non_increasing([r.mean_ood_q for r in out])


def test_probe_needs_alphas():
    with pytest.raises(ValueError):
        q_penalty_monotonicity_probe(two_step_mdp(), [])


def test_is_non_increasing():
    assert is_non_increasing([3, 2, 2, 1])
    assert not is_non_increasing([1, 2])
    assert is_non_increasing([])
