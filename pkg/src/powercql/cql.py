"""Discrete-action conservative Q-learning over a fixed transition dataset.

The trainer only ever sees a :class:`~powercql.core.Dataset`; it has no
handle on a simulator or actuator.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import kernels
from .core import Checkpoint, Dataset
from .qnet import DEFAULT_HIDDEN, Adam, NonFiniteError, QNetwork, feature_stats

log = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    def __init__(self, iteration: int, reason: str):
        super().__init__(f"training aborted at iteration {iteration}: {reason}")
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.9
    alpha: float = 0.1
    batch: int = 128
    iterations: int = 10_000
    lr: float = 1e-3
    seed: int = 0
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    target_sync: int | None = None
    early_stop_window: int | None = None
    early_stop_tol: float = 1e-3

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.batch < 1 or self.iterations < 1:
            raise ValueError("batch and iterations must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.target_sync is not None and self.target_sync < 1:
            raise ValueError("target_sync must be a positive interval")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass
class TrainReport:
    losses: np.ndarray  # (iterations_run, 3): total, bellman, conservative
    checkpoint: Checkpoint
    net: QNetwork

    def loss_csv(self) -> str:
        lines = ["iter,total,bellman,conservative"]
        for i, (tot, bel, con) in enumerate(self.losses):
            lines.append(f"{i},{float(tot)!r},{float(bel)!r},{float(con)!r}")
        return "\n".join(lines) + "\n"

    def write_loss_log(self, path) -> None:
        Path(path).write_text(self.loss_csv(), encoding="utf-8")


def bellman_targets(target_net: QNetwork, reward, next_states, terminal, gamma: float) -> np.ndarray:
    """r + gamma * max_a' Q(s', a'); terminal transitions do not bootstrap."""
    q_next = target_net.forward_batch(next_states)
    return reward + gamma * (1.0 - terminal) * q_next.max(axis=1)


def cql_loss(net: QNetwork, batch: dict, cfg: TrainConfig, target_net: QNetwork | None = None):
    """``(total, bellman_term, conservative_term)`` on a batch of column arrays.

    ``batch`` holds ``state``, ``action``, ``reward``, ``next_state`` and
    ``terminal`` as produced by :meth:`Dataset.arrays`. Rewards are the
    normalized ones.
    """
    if len(batch["action"]) == 0:
        raise ValueError("empty batch")
    y = bellman_targets(target_net or net, batch["reward"], batch["next_state"], batch["terminal"], cfg.gamma)
    q = net.forward_batch(batch["state"])
    total, bell, cons, _ = kernels.active().cql_terms(q, np.asarray(batch["action"], dtype=np.int64), y, cfg.alpha)
    if not np.isfinite(total):
        raise NonFiniteError("non-finite loss")
    return total, bell, cons


def cql_loss_grad(net: QNetwork, batch: dict, cfg: TrainConfig, target_net: QNetwork | None = None):
    """Loss parts plus the parameter gradient of the total loss (targets held fixed)."""
    y = bellman_targets(target_net or net, batch["reward"], batch["next_state"], batch["terminal"], cfg.gamma)
    q = net.forward_batch(batch["state"])
    total, bell, cons, dq = kernels.active().cql_terms(q, np.asarray(batch["action"], dtype=np.int64), y, cfg.alpha)
    return (total, bell, cons), net.backward(batch["state"], dq)


def train(dataset: Dataset, cfg: TrainConfig = TrainConfig(), require_coverage: bool = True) -> TrainReport:
    dataset.validate(require_coverage=require_coverage)
    cols = dataset.arrays()
    n = len(dataset)
    mean, std = feature_stats(np.vstack([cols["state"], cols["next_state"]]))

    init_seed, batch_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    net = QNetwork.init(dataset.grid.count, cfg.hidden, seed=init_seed, feature_mean=mean, feature_std=std)
    rng = np.random.default_rng(batch_seed)
    opt = Adam(net.params.size, lr=cfg.lr)
    k = kernels.active()

    # standardize once; the loop then talks to the kernels directly
    xs = np.ascontiguousarray(net.standardize(cols["state"]))
    xs2 = np.ascontiguousarray(net.standardize(cols["next_state"]))
    acts = cols["action"]
    rew = cols["reward"]
    cont = cfg.gamma * (1.0 - cols["terminal"])
    target_params = net.params.copy() if cfg.target_sync else None

    losses = np.empty((cfg.iterations, 3))
    done = cfg.iterations
    for it in range(cfg.iterations):
        if target_params is not None and it % cfg.target_sync == 0:
            target_params[:] = net.params
        idx = rng.integers(0, n, size=cfg.batch)
        x = xs[idx]
        q_next = k.forward(net.params if target_params is None else target_params, net.dims, xs2[idx])
        y = rew[idx] + cont[idx] * q_next.max(axis=1)
        q = k.forward(net.params, net.dims, x)
        total, bell, cons, dq = k.cql_terms(q, acts[idx], y, cfg.alpha)
        if not np.isfinite(total):
            raise TrainingAborted(it, "non-finite loss")
        losses[it] = total, bell, cons
        grad = k.backward(net.params, net.dims, x, dq)
        try:
            opt.step(net, grad)
        except NonFiniteError as exc:
            raise TrainingAborted(it, str(exc)) from exc
        w = cfg.early_stop_window
        if w and it + 1 >= 2 * w and (it + 1) % w == 0:
            prev = losses[it + 1 - 2 * w : it + 1 - w, 0].mean()
            last = losses[it + 1 - w : it + 1, 0].mean()
            if prev - last < cfg.early_stop_tol * max(abs(prev), 1e-12):
                done = it + 1
                log.info("loss plateau after %d iterations", done)
                break

    hyper = asdict(cfg)
    hyper["hidden"] = list(cfg.hidden)
    hyper["iterations_run"] = done
    ck = net.to_checkpoint(dataset.grid, hyper)
    return TrainReport(losses[:done].copy(), ck, net)


def greedy_indices(q: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties resolve to the lowest index (lowest cap)."""
    return np.argmax(q, axis=-1)


@dataclass(frozen=True)
class ProbeRow:
    alpha: float
    mean_ood_q: float
    mean_data_q: float


def q_penalty_monotonicity_probe(dataset: Dataset, alphas, cfg: TrainConfig = TrainConfig()) -> list[ProbeRow]:
    """Train one net per alpha (same seed) and report mean Q of actions absent at each dataset state."""
    alphas = list(alphas)
    if not alphas:
        raise ValueError("need at least one alpha")
    cols = dataset.arrays()
    states = cols["state"]
    # group identical states so "absent" means absent at that state anywhere in the data
    keys = [tuple(s) for s in states]
    seen: dict[tuple, set] = {}
    for key, a in zip(keys, cols["action"]):
        seen.setdefault(key, set()).add(int(a))
    uniq = list(seen)
    mask = np.ones((len(uniq), dataset.grid.count), dtype=bool)
    for i, key in enumerate(uniq):
        mask[i, list(seen[key])] = False
    x = np.array(uniq)
    rows = []
    for a in alphas:
        rep = train(dataset, replace(cfg, alpha=float(a)))
        q = rep.net.forward_batch(x)
        rows.append(ProbeRow(float(a), float(q[mask].mean()), float(q[~mask].mean())))
    return rows


def is_non_increasing(values, slack: float = 1e-6) -> bool:
    return all(b <= a + slack for a, b in zip(values, values[1:]))

