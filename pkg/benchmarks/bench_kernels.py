#!/usr/bin/env python3
"""Compare the numba and numpy kernel backends on representative workloads.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is warmed up once (numba compiles on first call), then timed with
timeit; results of both backends are checked for agreement.
"""

import argparse
import statistics
import timeit

import numpy as np

from incabs import _kernels


def workloads(rng):
    grid = rng.uniform(-5.12, 5.12, (200_000, 9))
    P = rng.uniform(-1, 1, (200, 2))
    F = np.sin(3 * P).sum(axis=1)
    slopes = rng.uniform(-10, 10, (40_000, 2))
    Q = rng.uniform(-1, 1, (200_000, 3))
    V = rng.normal(size=(200_000, 2))
    W = rng.normal(size=(2, 3))
    return {
        "rastrigin 200k x 9": ("rastrigin", (grid,)),
        "separation_widths 200 pts x 40k slopes": ("separation_widths", (P, F, slopes)),
        "bracket_violation 200k x 3 -> 2": ("bracket_violation", (Q, V, W, np.ones(2), W, -np.ones(2))),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if _kernels.numba_kernels is None:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'kernel':<42}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for label, (name, inputs) in workloads(np.random.default_rng(args.seed)).items():
        timings = {}
        outputs = {}
        for backend in ("numpy", "numba"):
            fn = getattr(getattr(_kernels, f"{backend}_kernels"), name)
            outputs[backend] = fn(*inputs)  # warm-up / compile
            runs = timeit.repeat(lambda: fn(*inputs), number=1, repeat=args.repeat)
            timings[backend] = statistics.median(runs) * 1e3
        a, b = (np.atleast_1d(np.asarray(outputs[k], dtype=float)) for k in ("numpy", "numba"))
        assert np.allclose(a, b, rtol=1e-10, atol=1e-10), f"{name}: backends disagree"
        print(f"{label:<42}{timings['numpy']:>12.2f}{timings['numba']:>12.2f}"
              f"{timings['numpy'] / timings['numba']:>9.1f}x")


if __name__ == "__main__":
    main()
