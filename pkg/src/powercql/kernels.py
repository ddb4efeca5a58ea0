"""Hot numeric kernels for the Q-network and the conservative loss.

Each kernel has a pure-numpy implementation and a numba ``@njit`` twin with
identical signatures. The numba path is used when numba imports and the
environment variable ``POWERCQL_NUMBA`` is not set to ``0``.

Parameters live in one flat float64 vector; layer ``k`` stores its weight
matrix ``(dims[k], dims[k+1])`` row-major followed by its bias ``(dims[k+1],)``.
Hidden layers use a rectifier, the output layer is linear.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np


def param_count(dims) -> int:
    return int(sum(i * o + o for i, o in zip(dims[:-1], dims[1:])))


# --- numpy reference --------------------------------------------------------


def _layers(params, dims):
    off = 0
    for i, o in zip(dims[:-1], dims[1:]):
        w = params[off : off + i * o].reshape(i, o)
        off += i * o
        b = params[off : off + o]
        off += o
        yield w, b


def forward_np(params, dims, x):
    h = x
    layers = list(_layers(params, dims))
    for k, (w, b) in enumerate(layers):
        h = h @ w + b
        if k < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return h


def backward_np(params, dims, x, dout):
    layers = list(_layers(params, dims))
    acts = [x]
    h = x
    for k, (w, b) in enumerate(layers):
        h = h @ w + b
        if k < len(layers) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    grads = []
    delta = dout
    for k in range(len(layers) - 1, -1, -1):
        w, _ = layers[k]
        grads.append((acts[k].T @ delta, delta.sum(axis=0)))
        if k > 0:
            delta = (delta @ w.T) * (acts[k] > 0)
    out = []
    for gw, gb in reversed(grads):
        out += [gw.ravel(), gb]
    return np.concatenate(out)


def cql_terms_np(q, actions, target, alpha):
    """Loss parts and dL/dQ for ``alpha * conservative + 0.5 * bellman``."""
    n = q.shape[0]
    idx = np.arange(n)
    m = q.max(axis=1, keepdims=True)
    ex = np.exp(q - m)
    z = ex.sum(axis=1, keepdims=True)
    lse = (m + np.log(z))[:, 0]
    q_data = q[idx, actions]
    diff = q_data - target
    conservative = float(np.mean(lse - q_data))
    bellman = float(np.mean(diff * diff))
    dq = (alpha / n) * (ex / z)
    dq[idx, actions] += (diff - alpha) / n
    return alpha * conservative + 0.5 * bellman, bellman, conservative, dq


def adam_np(params, grad, m, v, t, lr, beta1, beta2, eps):
    """In-place Adam update; ``t`` is the 1-based step count."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    params -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


numpy_kernels = SimpleNamespace(
    name="numpy", forward=forward_np, backward=backward_np, cql_terms=cql_terms_np, adam=adam_np
)


# --- numba twins ------------------------------------------------------------


def _build_numba():
    from numba import njit

    @njit(cache=True)
    def _fwd_all(params, dims, x):
        n = x.shape[0]
        nl = dims.shape[0] - 1
        width = 0
        for k in range(dims.shape[0]):
            if dims[k] > width:
                width = dims[k]
        acts = np.zeros((nl + 1, n, width))
        for r in range(n):
            for j in range(dims[0]):
                acts[0, r, j] = x[r, j]
        off = 0
        for k in range(nl):
            fi = dims[k]
            fo = dims[k + 1]
            boff = off + fi * fo
            relu = k < nl - 1
            for r in range(n):
                for j in range(fo):
                    acts[k + 1, r, j] = params[boff + j]
                # i outer, j inner: weight rows are contiguous; zero inputs skip a row
                for i in range(fi):
                    a = acts[k, r, i]
                    if a != 0.0:
                        row = off + i * fo
                        for j in range(fo):
                            acts[k + 1, r, j] += a * params[row + j]
                if relu:
                    for j in range(fo):
                        if acts[k + 1, r, j] < 0.0:
                            acts[k + 1, r, j] = 0.0
            off = boff + fo
        return acts

    @njit(cache=True)
    def forward_nb(params, dims, x):
        acts = _fwd_all(params, dims, x)
        nl = dims.shape[0] - 1
        return acts[nl, :, : dims[nl]].copy()

    @njit(cache=True)
    def backward_nb(params, dims, x, dout):
        acts = _fwd_all(params, dims, x)
        n = x.shape[0]
        nl = dims.shape[0] - 1
        grad = np.zeros(params.shape[0])
        offs = np.zeros(nl, dtype=np.int64)
        off = 0
        for k in range(nl):
            offs[k] = off
            off += dims[k] * dims[k + 1] + dims[k + 1]
        width = acts.shape[2]
        delta = np.zeros((n, width))
        for r in range(n):
            for j in range(dims[nl]):
                delta[r, j] = dout[r, j]
        for k in range(nl - 1, -1, -1):
            fi = dims[k]
            fo = dims[k + 1]
            woff = offs[k]
            boff = woff + fi * fo
            for r in range(n):
                for j in range(fo):
                    grad[boff + j] += delta[r, j]
                for i in range(fi):
                    a = acts[k, r, i]
                    if a != 0.0:
                        row = woff + i * fo
                        for j in range(fo):
                            grad[row + j] += a * delta[r, j]
            if k > 0:
                nd = np.zeros((n, width))
                for r in range(n):
                    for i in range(fi):
                        if acts[k, r, i] > 0.0:
                            row = woff + i * fo
                            s = 0.0
                            for j in range(fo):
                                s += delta[r, j] * params[row + j]
                            nd[r, i] = s
                delta = nd
        return grad

    @njit(cache=True)
    def _cql_nb(q, actions, target, alpha):
        n, na = q.shape
        dq = np.empty((n, na))
        cons = 0.0
        bell = 0.0
        for r in range(n):
            m = q[r, 0]
            for a in range(1, na):
                if q[r, a] > m:
                    m = q[r, a]
            z = 0.0
            for a in range(na):
                e = np.exp(q[r, a] - m)
                dq[r, a] = e
                z += e
            for a in range(na):
                dq[r, a] = alpha / n * dq[r, a] / z
            qd = q[r, actions[r]]
            diff = qd - target[r]
            cons += m + np.log(z) - qd
            bell += diff * diff
            dq[r, actions[r]] += (diff - alpha) / n
        cons /= n
        bell /= n
        return alpha * cons + 0.5 * bell, bell, cons, dq

    def cql_terms_nb(q, actions, target, alpha):
        total, bell, cons, dq = _cql_nb(q, actions, target, float(alpha))
        return float(total), float(bell), float(cons), dq

    @njit(cache=True)
    def adam_nb(params, grad, m, v, t, lr, beta1, beta2, eps):
        c1 = 1.0 - beta1**t
        c2 = 1.0 - beta2**t
        for i in range(params.shape[0]):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            params[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)

    return SimpleNamespace(
        name="numba", forward=forward_nb, backward=backward_nb, cql_terms=cql_terms_nb, adam=adam_nb
    )


try:
    numba_kernels = _build_numba()
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba_kernels = None


def use_numba() -> bool:
    return numba_kernels is not None and os.environ.get("POWERCQL_NUMBA", "1") != "0"


def active():
    """Kernel namespace for the current process configuration."""
    return numba_kernels if use_numba() else numpy_kernels
