"""Time the numpy and numba kernel backends on training-sized inputs.

    python3 benchmarks/bench_kernels.py [--iters 2000]

Prints per-call timings for each kernel and for one full optimizer step
(target forward, forward, loss, backward, update), which is what the
training loop does 10k times.
"""

import argparse
import time

import numpy as np

from powercql import kernels


def bench(fn, n):
    fn()  # warm-up (and JIT compile)
    t0 = time.perf_counter()
    for _ in range(n):
        fn()
    return (time.perf_counter() - t0) / n


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--batch", type=int, default=128)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    dims = np.array([5, 10, 10, 16], dtype=np.int64)
    params = rng.uniform(-0.4, 0.4, kernels.param_count(dims))
    x = rng.standard_normal((args.batch, 5))
    acts = rng.integers(0, 16, args.batch)
    y = rng.standard_normal(args.batch)

    backends = [kernels.numpy_kernels]
    if kernels.numba_kernels is not None:
        backends.append(kernels.numba_kernels)
    else:
        print("numba not importable; numpy only")

    results = {}
    for k in backends:
        p = params.copy()
        m = np.zeros_like(p)
        v = np.zeros_like(p)
        q = k.forward(p, dims, x)
        _, _, _, dq = k.cql_terms(q, acts, y, 0.1)
        g = k.backward(p, dims, x, dq)

        def train_step():
            qn = k.forward(p, dims, x)
            tgt = y + 0.9 * qn.max(axis=1)
            qq = k.forward(p, dims, x)
            _, _, _, d = k.cql_terms(qq, acts, tgt, 0.1)
            k.adam(p, k.backward(p, dims, x, d), m, v, 1, 1e-6, 0.9, 0.999, 1e-8)

        results[k.name] = {
            "forward": bench(lambda: k.forward(params, dims, x), args.iters),
            "cql_terms": bench(lambda: k.cql_terms(q, acts, y, 0.1), args.iters),
            "backward": bench(lambda: k.backward(params, dims, x, dq), args.iters),
            "adam": bench(lambda: k.adam(p, g, m, v, 1, 1e-6, 0.9, 0.999, 1e-8), args.iters),
            "train_step": bench(train_step, args.iters),
        }

    names = list(results)
    print(f"{'kernel':12s}" + "".join(f"{n:>14s}" for n in names) + ("    speedup" if len(names) == 2 else ""))
    for kern in results[names[0]]:
        row = [results[n][kern] for n in names]
        line = f"{kern:12s}" + "".join(f"{t * 1e6:11.1f} us" for t in row)
        if len(row) == 2:
            line += f"  {row[0] / row[1]:8.1f}x"
        print(line)
    step = results[names[-1]]["train_step"]
    print(f"10k training steps on {names[-1]}: ~{step * 1e4:.1f} s")


if __name__ == "__main__":
    main()
