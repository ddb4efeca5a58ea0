"""Reward from next-step progress and power, and per-benchmark rescaling."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, replace

from .core import DataError, Dataset

POWER_EPS = 1e-3
DEFAULT_RANGE = (-5.0, 5.0)


@dataclass(frozen=True)
class RewardBounds:
    r_min: float
    r_max: float

    def __post_init__(self):
        if not (math.isfinite(self.r_min) and math.isfinite(self.r_max)):
            raise ValueError("reward bounds must be finite")
        if self.r_max < self.r_min:
            raise ValueError(f"r_max {self.r_max} < r_min {self.r_min}")


def raw_reward(next_progress: float, next_power: float) -> float:
    """progress^3 / (power + 1e-3); rewards progress and penalizes measured power."""
    if next_progress < 0 or next_power < 0:
        raise ValueError("progress and power must be non-negative")
    return next_progress**3 / (next_power + POWER_EPS)


def fit_bounds(dataset: Dataset) -> dict[str, RewardBounds]:
    groups = defaultdict(list)
    for tr in dataset.transitions:
        groups[tr.benchmark].append(tr.reward_raw)
    if not groups:
        raise DataError("cannot fit reward bounds on an empty dataset")
    return {name: RewardBounds(min(rs), max(rs)) for name, rs in groups.items()}


def normalize(r_raw: float, b: RewardBounds, target: tuple[float, float] = DEFAULT_RANGE) -> float:
    lo, hi = target
    if b.r_max == b.r_min:
        return 0.5 * (lo + hi)
    # fraction first, so r_max maps to exactly hi
    frac = (r_raw - b.r_min) / (b.r_max - b.r_min)
    x = lo + (hi - lo) * frac
    # floating error must not leave the target interval
    return min(hi, max(lo, x))


def normalize_dataset(dataset: Dataset, target: tuple[float, float] = DEFAULT_RANGE) -> Dataset:
    """Refit bounds from raw rewards and rewrite every ``reward_norm``."""
    bounds = fit_bounds(dataset)
    trs = [replace(tr, reward_norm=normalize(tr.reward_raw, bounds[tr.benchmark], target)) for tr in dataset.transitions]
    return Dataset(
        trs,
        dataset.grid,
        {k: (b.r_min, b.r_max) for k, b in bounds.items()},
        tuple(target),
    )
