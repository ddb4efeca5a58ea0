"""Offline dataset generation under an arbitrary (default uniform-random) cap policy."""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from . import nodesim
from .core import DEFAULT_GRID, ActionGrid, DataError, Dataset, NodeState, Transition
from .reward import DEFAULT_RANGE, normalize_dataset, raw_reward

log = logging.getLogger(__name__)

BehaviorPolicy = Callable[[NodeState, np.random.Generator], int]

DEFAULT_EPISODES = 3


class CoverageError(DataError):
    pass


def uniform_policy(grid: ActionGrid) -> BehaviorPolicy:
    return lambda _state, rng: int(rng.integers(grid.count))


def _episode(profile, grid, policy, dt, seed_seq, max_steps=None) -> list[Transition]:
    sim_seed, act_seed = seed_seq.spawn(2)
    sim_rng = np.random.default_rng(sim_seed)
    act_rng = np.random.default_rng(act_seed)
    budget = max_steps if max_steps is not None else nodesim.default_step_budget(profile, dt)
    sim = nodesim.SimState()
    # nothing observed yet: first interval runs at the top cap, as the controller does
    state = nodesim.step(profile, sim, grid.values[-1], dt, sim_rng).state
    out = []
    t = 0
    while not sim.done:
        if sim.steps >= budget:
            raise nodesim.StepBudgetExceeded(f"{profile.name}: collection episode exceeded {budget} steps")
        a = int(policy(state, act_rng))
        if not 0 <= a < grid.count:
            raise ValueError(f"behavior policy returned action {a} outside the grid")
        res = nodesim.step(profile, sim, grid.values[a], dt, sim_rng)
        nxt = res.state
        out.append(
            Transition(
                benchmark=profile.name,
                t=t,
                state=state,
                action_index=a,
                action_watts=grid.values[a],
                reward_raw=raw_reward(nxt.progress, nxt.power),
                reward_norm=0.0,
                next_state=nxt,
                terminal=res.done,
            )
        )
        state = nxt
        t += 1
    return out


def collect(
    profiles,
    grid: ActionGrid = DEFAULT_GRID,
    episodes_per_profile: int = DEFAULT_EPISODES,
    dt: float = 1.0,
    seed: int = 0,
    policy: BehaviorPolicy | None = None,
    retry_budget: int = 12,
    reward_range: tuple[float, float] = DEFAULT_RANGE,
) -> Dataset:
    """Run every profile ``episodes_per_profile`` times and return a normalized dataset.

    Extra episodes are appended round-robin until every cap has been sampled,
    at most ``retry_budget`` of them.
    """
    profiles = list(profiles)
    if not profiles:
        raise ValueError("no profiles to collect from")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if episodes_per_profile < 1:
        raise ValueError("episodes_per_profile must be >= 1")
    policy = policy or uniform_policy(grid)
    transitions: list[Transition] = []
    for pi, prof in enumerate(profiles):
        for ep in range(episodes_per_profile):
            transitions += _episode(prof, grid, policy, dt, np.random.SeedSequence([seed, pi, ep]))

    def missing():
        seen = {tr.action_index for tr in transitions}
        return [i for i in range(grid.count) if i not in seen]

    extra = 0
    while missing():
        if extra >= retry_budget:
            raise CoverageError(f"caps {missing()} never sampled after {retry_budget} extra episodes; episodes too short?")
        pi = extra % len(profiles)
        ep = episodes_per_profile + extra // len(profiles)
        log.info("coverage gap %s, extra episode on %s", missing(), profiles[pi].name)
        transitions += _episode(profiles[pi], grid, policy, dt, np.random.SeedSequence([seed, pi, ep]))
        extra += 1

    ds = normalize_dataset(Dataset(transitions, grid), reward_range)
    ds.validate()
    return ds


def split_train_profiles(profiles) -> tuple[list, list]:
    train = [p for p in profiles if p.train]
    holdout = [p for p in profiles if not p.train]
    if not train or not holdout:
        raise ValueError(f"split needs both partitions non-empty (train={len(train)}, holdout={len(holdout)})")
    return train, holdout
