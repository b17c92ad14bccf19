import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cotriage import _accel, kernels

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def split_case(draw_rng, n, d, k):
    X = draw_rng.integers(0, 4, size=(n, d)).astype(np.float64)
    y = draw_rng.integers(0, k, size=n).astype(np.int64)
    return X, y


@needs_numba
@given(st.integers(0, 10_000), st.integers(2, 40), st.integers(1, 6), st.integers(2, 4), st.integers(1, 3))
@settings(max_examples=60, deadline=None)
def test_best_split_flavours_identical(seed, n, d, k, min_leaf):
    X, y = split_case(np.random.default_rng(seed), n, d, k)
    assert kernels.best_split_numba(X, y, k, min_leaf) == kernels.best_split_numpy(X, y, k, min_leaf)


def test_best_split_against_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(30):
        X, y = split_case(rng, 25, 3, 3)
        col, thr, _ = kernels.best_split_numpy(X, y, 3, 1)
        best = None
        for c in range(3):
            vals = np.unique(X[:, c])
            for t in (vals[:-1] + vals[1:]) / 2:
                left, right = y[X[:, c] <= t], y[X[:, c] > t]
                imp = sum(len(p) * (1 - np.sum((np.bincount(p, minlength=3) / len(p)) ** 2)) for p in (left, right))
                if best is None or imp < best[0] - 1e-12:
                    best = (imp, c, t)
        if best is None:
            assert col == -1
        else:
            assert (col, thr) == (best[1], best[2])


def test_constant_column_has_no_split():
    X = np.ones((5, 2))
    y = np.array([0, 1, 0, 1, 1])
    assert kernels.best_split_numpy(X, y, 2, 1)[0] == -1


@needs_numba
def test_svm_flavours_agree():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 5))
    Y = np.where(rng.integers(0, 3, size=60)[:, None] == np.arange(3), 1.0, -1.0)
    W1, b1 = kernels.svm_fit_numpy(X, Y, 0.01, 0.1, 100)
    W2, b2 = kernels.svm_fit_numba(X, Y, 0.01, 0.1, 100)
    np.testing.assert_allclose(W1, W2, rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(b1, b2, rtol=1e-9, atol=1e-10)


def closure_oracle(meta, adj):
    """Plain BFS over incidents."""
    n = len(meta)
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        if meta[i] < 0:
            continue
        for j in range(n):
            if j not in seen and meta[j] >= 0 and adj[meta[i], meta[j]]:
                seen.add(j)
                stack.append(j)
    return np.array([i in seen for i in range(n)])


@given(
    st.integers(1, 12).flatmap(
        lambda k: st.tuples(
            arrays(np.int64, st.integers(1, 40), elements=st.integers(-1, k - 1)),
            arrays(np.bool_, (k, k)),
        )
    )
)
@settings(max_examples=150, deadline=None)
def test_closure_flavours_match_oracle(case):
    meta, adj = case
    adj = adj | adj.T
    expected = closure_oracle(meta, adj)
    assert np.array_equal(kernels.closure_mask_numpy(meta, adj), expected)
    if _accel.HAVE_NUMBA:
        assert np.array_equal(kernels.closure_mask_numba(meta, adj), expected)


def test_unknown_seed_admits_only_itself():
    meta = np.array([-1, 0, 0], dtype=np.int64)
    adj = np.ones((1, 1), dtype=bool)
    assert kernels.closure_mask_numpy(meta, adj).tolist() == [True, False, False]


@pytest.mark.parametrize("flag,expected", [("0", "numpy"), ("off", "numpy")])
def test_env_flag_forces_numpy(flag, expected):
    env = dict(os.environ, COTRIAGE_NUMBA=flag)
    code = "from cotriage import _accel, kernels; print(_accel.backend(), kernels.best_split is kernels.best_split_numpy)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == [expected, "True"]


@needs_numba
def test_default_backend_is_numba():
    env = {k: v for k, v in os.environ.items() if k != "COTRIAGE_NUMBA"}
    code = "from cotriage import _accel; print(_accel.backend())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"
