"""Small rectifier MLP mapping a NodeState to one Q-value per power cap."""

from __future__ import annotations

import numpy as np

from . import kernels
from .core import STATE_DIM, ActionGrid, Checkpoint, NodeState

DEFAULT_HIDDEN = (10, 10)


class NonFiniteError(FloatingPointError):
    pass


def feature_stats(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column mean/std for input standardization; constant columns get std 1."""
    mean = states.mean(axis=0)
    std = states.std(axis=0)
    std = np.where(std > 1e-8, std, 1.0)
    return mean, std


class QNetwork:
    """Parameters in one flat vector, see :mod:`powercql.kernels` for the layout."""

    def __init__(self, dims, params, feature_mean=None, feature_std=None, activation: str = "relu"):
        self.dims = np.asarray(dims, dtype=np.int64)
        if self.dims.ndim != 1 or self.dims.size < 2 or np.any(self.dims < 1):
            raise ValueError(f"bad layer dims {dims}")
        if activation != "relu":
            raise ValueError(f"unsupported activation {activation!r}")
        self.activation = activation
        self.params = np.ascontiguousarray(params, dtype=np.float64)
        if self.params.shape != (kernels.param_count(self.dims),):
            raise ValueError(f"expected {kernels.param_count(self.dims)} parameters, got {self.params.shape}")
        d0 = int(self.dims[0])
        self.feature_mean = np.zeros(d0) if feature_mean is None else np.asarray(feature_mean, dtype=float).copy()
        self.feature_std = np.ones(d0) if feature_std is None else np.asarray(feature_std, dtype=float).copy()
        if np.any(self.feature_std <= 0):
            raise ValueError("feature_std must be positive")

    @classmethod
    def init(cls, n_actions: int = 16, hidden=DEFAULT_HIDDEN, seed: int = 0, feature_mean=None, feature_std=None, n_inputs: int = STATE_DIM):
        """Uniform fan-in initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
        dims = (n_inputs, *hidden, n_actions)
        rng = np.random.default_rng(seed)
        chunks = []
        for i, o in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(i)
            chunks.append(rng.uniform(-bound, bound, size=i * o))
            chunks.append(rng.uniform(-bound, bound, size=o))
        return cls(dims, np.concatenate(chunks), feature_mean, feature_std)

    @classmethod
    def zeros(cls, n_actions: int = 16, hidden=DEFAULT_HIDDEN, n_inputs: int = STATE_DIM):
        dims = (n_inputs, *hidden, n_actions)
        return cls(dims, np.zeros(kernels.param_count(dims)))

    @property
    def n_actions(self) -> int:
        return int(self.dims[-1])

    def copy(self) -> "QNetwork":
        return QNetwork(self.dims, self.params.copy(), self.feature_mean, self.feature_std, self.activation)

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feature_mean) / self.feature_std

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite network input")
        return kernels.active().forward(self.params, self.dims, np.ascontiguousarray(self.standardize(x)))

    def forward(self, state) -> np.ndarray:
        x = state.as_array() if isinstance(state, NodeState) else np.asarray(state, dtype=float)
        return self.forward_batch(x[None, :])[0]

    def backward(self, x: np.ndarray, dq: np.ndarray) -> np.ndarray:
        """Gradient of a scalar loss w.r.t. the flat parameters, given dLoss/dQ for the batch."""
        x = np.ascontiguousarray(self.standardize(np.atleast_2d(np.asarray(x, dtype=np.float64))))
        dq = np.ascontiguousarray(dq, dtype=np.float64)
        if x.shape[0] == 0:
            raise ValueError("empty batch")
        return kernels.active().backward(self.params, self.dims, x, dq)

    def to_checkpoint(self, grid: ActionGrid, hyperparams: dict | None = None) -> Checkpoint:
        return Checkpoint(
            layer_dims=tuple(int(d) for d in self.dims),
            params=self.params.copy(),
            feature_mean=self.feature_mean.copy(),
            feature_std=self.feature_std.copy(),
            grid=grid,
            hyperparams=dict(hyperparams or {}),
            activation=self.activation,
        )

    @classmethod
    def from_checkpoint(cls, ck: Checkpoint) -> "QNetwork":
        return cls(ck.layer_dims, ck.params.copy(), ck.feature_mean, ck.feature_std, ck.activation)


class Adam:
    """Adaptive-moment optimizer state for one network."""

    def __init__(self, n_params: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, net: QNetwork, grads: np.ndarray, lr: float | None = None) -> QNetwork:
        if not np.all(np.isfinite(grads)):
            raise NonFiniteError("non-finite gradient")
        self.t += 1
        kernels.active().adam(
            net.params, np.ascontiguousarray(grads, dtype=np.float64), self.m, self.v, self.t,
            self.lr if lr is None else lr, self.beta1, self.beta2, self.eps,
        )
        if not np.all(np.isfinite(net.params)):
            raise NonFiniteError(f"non-finite parameters after optimizer step {self.t}")
        return net


def optimizer_step(net: QNetwork, grads: np.ndarray, opt: Adam, lr: float | None = None) -> QNetwork:
    return opt.step(net, grads, lr)
