"""Domain types shared by the simulator, trainer, controller and reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STATE_FIELDS = ("progress", "power", "ipc", "stl", "cmr")
STATE_DIM = len(STATE_FIELDS)


class DataError(ValueError):
    """Raised when a dataset, checkpoint or profile file is malformed or invalid."""


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


@dataclass(frozen=True)
class NodeState:
    """One 1 Hz observation of the node.

    ``stl`` and ``cmr`` are clamped to [0, 1] and the rates to non-negative
    values on construction, so a NodeState is always a valid network input.
    """

    progress: float
    power: float
    ipc: float
    stl: float
    cmr: float

    def __post_init__(self):
        vals = (self.progress, self.power, self.ipc, self.stl, self.cmr)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite NodeState field: {vals}")
        object.__setattr__(self, "progress", max(0.0, float(self.progress)))
        object.__setattr__(self, "power", max(0.0, float(self.power)))
        object.__setattr__(self, "ipc", max(0.0, float(self.ipc)))
        object.__setattr__(self, "stl", _clamp01(float(self.stl)))
        object.__setattr__(self, "cmr", _clamp01(float(self.cmr)))

    def as_array(self) -> np.ndarray:
        return np.array([self.progress, self.power, self.ipc, self.stl, self.cmr])

    def as_list(self) -> list[float]:
        return [self.progress, self.power, self.ipc, self.stl, self.cmr]

    @classmethod
    def from_sequence(cls, values) -> "NodeState":
        if len(values) != STATE_DIM:
            raise DataError(f"state needs {STATE_DIM} values, got {len(values)}")
        return cls(*(float(v) for v in values))

    @classmethod
    def zeros(cls) -> "NodeState":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ActionGrid:
    min_watts: float
    max_watts: float
    count: int
    values: tuple[float, ...]

    @property
    def step(self) -> float:
        if self.count == 1:
            return 0.0
        return (self.max_watts - self.min_watts) / (self.count - 1)

    def to_dict(self) -> dict:
        return {"min_watts": self.min_watts, "max_watts": self.max_watts, "count": self.count}

    @classmethod
    def single(cls, watts: float) -> "ActionGrid":
        """Degenerate one-cap grid (fixed-cap data collection)."""
        w = float(watts)
        if not math.isfinite(w):
            raise ValueError("cap must be finite")
        return cls(w, w, 1, (w,))

    @classmethod
    def from_dict(cls, d: dict) -> "ActionGrid":
        try:
            if int(d["count"]) == 1:
                return cls.single(float(d["min_watts"]))
            return make_action_grid(float(d["min_watts"]), float(d["max_watts"]), int(d["count"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad action grid {d!r}: {exc}") from exc


def make_action_grid(min_watts: float = 78.0, max_watts: float = 165.0, count: int = 16) -> ActionGrid:
    """Uniformly spaced power caps with exact endpoints."""
    if not (math.isfinite(min_watts) and math.isfinite(max_watts)):
        raise ValueError("grid bounds must be finite")
    if count < 2:
        raise ValueError(f"grid needs at least 2 caps, got {count}")
    if not max_watts > min_watts:
        raise ValueError("max_watts must exceed min_watts")
    vals = np.linspace(min_watts, max_watts, count)
    vals[0], vals[-1] = min_watts, max_watts
    return ActionGrid(float(min_watts), float(max_watts), int(count), tuple(float(v) for v in vals))


DEFAULT_GRID = make_action_grid()


def snap_to_grid(watts: float, grid: ActionGrid) -> int:
    """Index of the nearest cap; exact midpoints go to the lower cap."""
    if not math.isfinite(watts):
        raise ValueError("cannot snap a non-finite cap")
    if watts <= grid.values[0]:
        return 0
    if watts >= grid.values[-1]:
        return grid.count - 1
    # rounding noise on the stored values must not turn a midpoint into an upper snap
    tol = 1e-9 * max(1.0, abs(watts))
    best, best_d = 0, math.inf
    for i, v in enumerate(grid.values):
        d = abs(watts - v)
        if d < best_d - tol:
            best, best_d = i, d
    return best


@dataclass(frozen=True)
class Transition:
    benchmark: str
    t: int
    state: NodeState
    action_index: int
    action_watts: float
    reward_raw: float
    reward_norm: float
    next_state: NodeState
    terminal: bool

    def to_dict(self) -> dict:
        return {
            "benchmark": self.benchmark,
            "t": self.t,
            "state": self.state.as_list(),
            "action_index": self.action_index,
            "action_watts": self.action_watts,
            "reward_raw": self.reward_raw,
            "reward_norm": self.reward_norm,
            "next_state": self.next_state.as_list(),
            "terminal": self.terminal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Transition":
        try:
            return cls(
                benchmark=str(d["benchmark"]),
                t=int(d["t"]),
                state=NodeState.from_sequence(d["state"]),
                action_index=int(d["action_index"]),
                action_watts=float(d["action_watts"]),
                reward_raw=float(d["reward_raw"]),
                reward_norm=float(d["reward_norm"]),
                next_state=NodeState.from_sequence(d["next_state"]),
                terminal=bool(d["terminal"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad transition record: {exc}") from exc


@dataclass
class Dataset:
    transitions: list[Transition]
    grid: ActionGrid
    reward_bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    reward_range: tuple[float, float] = (-5.0, 5.0)

    def __len__(self):
        return len(self.transitions)

    @property
    def benchmarks(self) -> list[str]:
        seen = dict.fromkeys(tr.benchmark for tr in self.transitions)
        return list(seen)

    def missing_actions(self) -> list[int]:
        seen = {tr.action_index for tr in self.transitions}
        return [i for i in range(self.grid.count) if i not in seen]

    def validate(self, require_coverage: bool = True) -> None:
        """Check record consistency; with ``require_coverage`` every cap must appear."""
        if not self.transitions:
            raise DataError("dataset is empty")
        lo, hi = self.reward_range
        for tr in self.transitions:
            if not 0 <= tr.action_index < self.grid.count:
                raise DataError(f"action index {tr.action_index} outside grid at t={tr.t}")
            if abs(tr.action_watts - self.grid.values[tr.action_index]) > 1e-9:
                raise DataError(f"action_watts {tr.action_watts} does not match grid index {tr.action_index}")
            if not math.isfinite(tr.reward_raw):
                raise DataError(f"non-finite raw reward at {tr.benchmark} t={tr.t}")
            if not lo - 1e-9 <= tr.reward_norm <= hi + 1e-9:
                raise DataError(f"normalized reward {tr.reward_norm} outside [{lo}, {hi}]")
        if require_coverage:
            missing = self.missing_actions()
            if missing:
                raise DataError(f"dataset never samples action indices {missing}")

    def arrays(self) -> dict[str, np.ndarray]:
        """Column view used by the trainer."""
        n = len(self.transitions)
        s = np.empty((n, STATE_DIM))
        s2 = np.empty((n, STATE_DIM))
        a = np.empty(n, dtype=np.int64)
        r = np.empty(n)
        term = np.empty(n)
        for i, tr in enumerate(self.transitions):
            s[i] = tr.state.as_list()
            s2[i] = tr.next_state.as_list()
            a[i] = tr.action_index
            r[i] = tr.reward_norm
            term[i] = 1.0 if tr.terminal else 0.0
        return {"state": s, "action": a, "reward": r, "next_state": s2, "terminal": term}


@dataclass
class Checkpoint:
    layer_dims: tuple[int, ...]
    params: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray
    grid: ActionGrid
    hyperparams: dict = field(default_factory=dict)
    activation: str = "relu"

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if self.layer_dims[0] != STATE_DIM:
            raise DataError(f"first layer must take {STATE_DIM} inputs, got {self.layer_dims[0]}")
        if self.layer_dims[-1] != self.grid.count:
            raise DataError(f"output layer has {self.layer_dims[-1]} units but grid has {self.grid.count} caps")
        if np.any(np.asarray(self.feature_std) <= 0):
            raise DataError("feature_std entries must be positive")
        dims = self.layer_dims
        expected = sum(i * o + o for i, o in zip(dims[:-1], dims[1:]))
        if np.shape(self.params) != (expected,):
            raise DataError(f"layer dims {dims} need {expected} parameters, got shape {np.shape(self.params)}")
