"""1 Hz greedy power-capping controller over an actuator/sensor backend."""

from __future__ import annotations

from typing import Protocol

import numpy as np

from . import nodesim
from .core import ActionGrid, Checkpoint, NodeState, snap_to_grid
from .nodesim import BenchmarkProfile, EpisodeLog, SimStepResult
from .qnet import QNetwork

MAX_SENSOR_MISSES = 3


class SensorReadError(RuntimeError):
    pass


class ControlError(RuntimeError):
    def __init__(self, step: int, reason: str):
        super().__init__(f"control step {step}: {reason}")
        self.step = step


class ActuatorSensor(Protocol):
    """What the controller needs from a node. A RAPL/GEOPM backend would implement this."""

    def capabilities(self) -> tuple[float, float]: ...

    def read_state(self) -> NodeState: ...

    def apply_cap(self, watts: float) -> bool: ...

    def advance(self, dt: float) -> SimStepResult: ...

    @property
    def done(self) -> bool: ...


class SimulatedNode:
    """Simulator-backed actuator/sensor; never fails a read."""

    def __init__(self, profile: BenchmarkProfile, grid: ActionGrid, seed: int = 0):
        self.profile = profile
        self.grid = grid
        self.rng = np.random.default_rng(seed)
        self.sim = nodesim.SimState()
        self.cap = grid.values[-1]
        self.state = NodeState.zeros()

    def capabilities(self) -> tuple[float, float]:
        return self.grid.min_watts, self.grid.max_watts

    def read_state(self) -> NodeState:
        return self.state

    def apply_cap(self, watts: float) -> bool:
        i = snap_to_grid(watts, self.grid)
        if abs(self.grid.values[i] - watts) > 1e-9:
            raise ValueError(f"cap {watts} W is not on the action grid")
        self.cap = self.grid.values[i]
        return True

    def advance(self, dt: float) -> SimStepResult:
        res = nodesim.step(self.profile, self.sim, self.cap, dt, self.rng)
        self.state = res.state
        return res

    @property
    def done(self) -> bool:
        return self.sim.done

    @property
    def time(self) -> float:
        return self.sim.time


def _as_net(net) -> QNetwork:
    return QNetwork.from_checkpoint(net) if isinstance(net, Checkpoint) else net


def greedy_action(net, state: NodeState, grid: ActionGrid) -> tuple[int, float]:
    """argmax_a Q(state, a); ties go to the lowest cap."""
    q = _as_net(net).forward(state)
    if q.shape[0] != grid.count:
        raise ValueError(f"network has {q.shape[0]} outputs, grid has {grid.count} caps")
    i = int(np.argmax(q))
    return i, grid.values[i]


def control_episode(
    net,
    backend,
    grid: ActionGrid | None = None,
    dt: float = 1.0,
    seed: int = 0,
    max_steps: int | None = None,
) -> EpisodeLog:
    """Sense, decide, actuate, wait; until the workload reports completion.

    ``backend`` is a :class:`BenchmarkProfile` (wrapped in a
    :class:`SimulatedNode` seeded with ``seed``) or any ActuatorSensor.
    The first interval runs at the top cap because nothing has been observed.
    """
    if isinstance(net, Checkpoint):
        grid = grid or net.grid
    qnet = _as_net(net)
    if grid is None:
        raise ValueError("no action grid given")
    if isinstance(backend, BenchmarkProfile):
        name = backend.name
        budget = max_steps if max_steps is not None else nodesim.default_step_budget(backend, dt)
        backend = SimulatedNode(backend, grid, seed)
    else:
        name = getattr(getattr(backend, "profile", None), "name", "node")
        budget = max_steps if max_steps is not None else 100_000
    lo, hi = backend.capabilities()
    if abs(lo - grid.min_watts) > 1e-9 or abs(hi - grid.max_watts) > 1e-9:
        raise ValueError(f"checkpoint grid [{grid.min_watts}, {grid.max_watts}] does not match actuator range [{lo}, {hi}]")

    log = EpisodeLog(name, dt)
    cap = grid.values[-1]
    misses = 0
    t = 0.0
    step = 0
    while True:
        if step > 0:
            try:
                state = backend.read_state()
                misses = 0
                _, cap = greedy_action(qnet, state, grid)
            except SensorReadError as exc:
                misses += 1
                if misses >= MAX_SENSOR_MISSES:
                    raise ControlError(step, f"{misses} consecutive sensor misses") from exc
        try:
            backend.apply_cap(cap)
            res = backend.advance(dt)
        except (nodesim.SimulationError, OSError, ValueError) as exc:
            raise ControlError(step, str(exc)) from exc
        t += dt
        log.append(t, res, cap)
        step += 1
        if res.done:
            break
        if step >= budget:
            raise nodesim.StepBudgetExceeded(f"{name}: controller did not finish within {budget} steps")
    return log
