"""Offline conservative Q-learning for CPU power capping, with a simulated node."""

from .core import DEFAULT_GRID, ActionGrid, Checkpoint, DataError, Dataset, NodeState, Transition, make_action_grid, snap_to_grid
from .cql import TrainConfig, train
from .nodesim import BenchmarkProfile, builtin_profiles, profile_by_name

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_GRID",
    "ActionGrid",
    "BenchmarkProfile",
    "Checkpoint",
    "DataError",
    "Dataset",
    "NodeState",
    "TrainConfig",
    "Transition",
    "builtin_profiles",
    "make_action_grid",
    "profile_by_name",
    "snap_to_grid",
    "train",
]
