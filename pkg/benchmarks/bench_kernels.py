"""Time the numba and numpy flavours of each hot kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]

Numba timings exclude the first (compiling or cache-loading) call.
"""

import argparse
import timeit

import numpy as np

from cotriage import _accel, kernels


def split_inputs(rng):
    X = rng.integers(0, 6, size=(400, 300)).astype(np.float64)
    y = rng.integers(0, 10, size=400).astype(np.int64)
    return (X, y, 10, 1)


def svm_inputs(rng):
    # service-graph features: a handful of nonzero counts and links per row
    X = np.where(rng.random((400, 300)) < 0.03, rng.integers(1, 4, size=(400, 300)), 0).astype(np.float64)
    labels = rng.integers(0, 10, size=400)
    Y = np.where(labels[:, None] == np.arange(10), 1.0, -1.0)
    return (X, Y, 1e-2, 0.1, 200)


def closure_inputs(rng):
    k = 600
    adj = rng.random((k, k)) < 0.004
    adj |= adj.T
    meta = rng.integers(-1, k, size=2000).astype(np.int64)
    meta[0] = max(meta[0], 0)
    return (meta, adj)


CASES = {
    "best_split": (split_inputs, kernels.best_split_numpy, kernels.best_split_numba),
    "svm_fit": (svm_inputs, kernels.svm_fit_numpy, kernels.svm_fit_numba),
    "closure_mask": (closure_inputs, kernels.closure_mask_numpy, kernels.closure_mask_numba),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"numba available: {_accel.HAVE_NUMBA}, active backend: {_accel.backend()}")
    print(f"{'kernel':<14}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, (make, fn_np, fn_nb) in CASES.items():
        inputs = make(rng)
        t_np = min(timeit.repeat(lambda: fn_np(*inputs), number=1, repeat=args.repeat))
        if _accel.HAVE_NUMBA:
            fn_nb(*inputs)
            t_nb = min(timeit.repeat(lambda: fn_nb(*inputs), number=1, repeat=args.repeat))
            print(f"{name:<14}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")
        else:
            print(f"{name:<14}{t_np * 1e3:>12.2f}{'n/a':>12}{'':>10}")


if __name__ == "__main__":
    main()
