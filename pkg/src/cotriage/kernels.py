"""Hot numeric loops, each in a numba and a pure-numpy flavour.

The public names ``best_split`` and ``svm_fit`` dispatch on
:data:`cotriage._accel.USE_NUMBA`; ``closure_mask`` always runs the numpy
flavour (see the note at the bottom). Both flavours stay importable so tests and
the benchmark can compare them directly.

``best_split`` is bit-identical across flavours: split scores are built from
integer class counts and a single float division per side. ``svm_fit`` sums
in a different order per flavour and agrees to rounding only.
"""

import numpy as np

from cotriage._accel import USE_NUMBA, njit

# --------------------------------------------------------------------------
# Gini split search
# --------------------------------------------------------------------------
#
# Minimising weighted Gini impurity over a split is the same as maximising
#     sum_c L_c^2 / n_L + sum_c R_c^2 / n_R
# where L_c, R_c are per-class counts. Both flavours maximise that score,
# scanning columns in order and thresholds ascending; strict ">" keeps the
# lowest column (then lowest threshold) on ties.


def _best_split_py(X, y, n_classes, min_leaf):
    n, d = X.shape
    best_col = -1
    best_thr = 0.0
    best_score = -1.0
    total = np.bincount(y, minlength=n_classes).astype(np.int64)
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    for j in range(d):
        order = np.argsort(X[:, j], kind="mergesort")
        xs = X[order, j]
        onehot[:] = 0
        onehot[np.arange(n), y[order]] = 1
        left = np.cumsum(onehot, axis=0)[:-1]
        right = total - left
        n_left = np.arange(1, n, dtype=np.int64)
        n_right = n - n_left
        valid = (xs[:-1] != xs[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
        if not valid.any():
            continue
        score = (left * left).sum(axis=1) / n_left + (right * right).sum(axis=1) / n_right
        score = np.where(valid, score, -1.0)
        pos = int(np.argmax(score))
        if score[pos] > best_score:
            best_score = float(score[pos])
            best_col = j
            best_thr = (xs[pos] + xs[pos + 1]) / 2.0
    return best_col, best_thr, best_score


@njit
def _best_split_nb(X, y, n_classes, min_leaf):
    n, d = X.shape
    best_col = -1
    best_thr = 0.0
    best_score = -1.0
    total = np.zeros(n_classes, dtype=np.int64)
    for i in range(n):
        total[y[i]] += 1
    left = np.zeros(n_classes, dtype=np.int64)
    right = np.zeros(n_classes, dtype=np.int64)
    for j in range(d):
        order = np.argsort(X[:, j], kind="mergesort")
        sq_left = 0
        sq_right = 0
        for c in range(n_classes):
            left[c] = 0
            right[c] = total[c]
            sq_right += total[c] * total[c]
        for pos in range(n - 1):
            i = order[pos]
            c = y[i]
            sq_left += 2 * left[c] + 1
            left[c] += 1
            sq_right -= 2 * right[c] - 1
            right[c] -= 1
            v = X[i, j]
            v_next = X[order[pos + 1], j]
            if v == v_next:
                continue
            n_left = pos + 1
            n_right = n - n_left
            if n_left < min_leaf or n_right < min_leaf:
                continue
            score = sq_left / n_left + sq_right / n_right
            if score > best_score:
                best_score = score
                best_col = j
                best_thr = (v + v_next) / 2.0
    return best_col, best_thr, best_score


def best_split_numpy(X, y, n_classes, min_leaf):
    """Best (column, threshold, score) for one node; column -1 if none."""
    return _best_split_py(X, y, int(n_classes), int(min_leaf))


def best_split_numba(X, y, n_classes, min_leaf):
    col, thr, score = _best_split_nb(X, y, int(n_classes), int(min_leaf))
    return int(col), float(thr), float(score)


# --------------------------------------------------------------------------
# One-vs-rest linear SVM, full-batch hinge-loss subgradient descent
# --------------------------------------------------------------------------
#
# Per class c minimise  lam/2 ||w_c||^2 + mean_i max(0, 1 - Y_ic (w_c.x_i + b_c))
# with step  eta_t = lr / (1 + lam * lr * t).  Bias is not regularised.


def _svm_fit_py(X, Y, lam, lr, epochs):
    n, d = X.shape
    k = Y.shape[1]
    W = np.zeros((k, d))
    b = np.zeros(k)
    for t in range(1, epochs + 1):
        eta = lr / (1.0 + lam * lr * t)
        S = X @ W.T + b
        A = np.where(Y * S < 1.0, Y, 0.0)
        gW = lam * W - (A.T @ X) / n
        gb = -A.sum(axis=0) / n
        W -= eta * gW
        b -= eta * gb
    return W, b


@njit
def _svm_fit_nb(indptr, indices, data, n, d, Y, lam, lr, epochs):
    # X arrives as CSR: graph features are mostly zero, so rows are walked
    # over their nonzeros only.
    k = Y.shape[1]
    W = np.zeros((k, d))
    b = np.zeros(k)
    gw = np.zeros(d)
    for t in range(1, epochs + 1):
        eta = lr / (1.0 + lam * lr * t)
        for c in range(k):
            for j in range(d):
                gw[j] = 0.0
            gb = 0.0
            for i in range(n):
                s = b[c]
                for p in range(indptr[i], indptr[i + 1]):
                    s += W[c, indices[p]] * data[p]
                yc = Y[i, c]
                if yc * s < 1.0:
                    for p in range(indptr[i], indptr[i + 1]):
                        gw[indices[p]] -= yc * data[p]
                    gb -= yc
            for j in range(d):
                W[c, j] -= eta * (lam * W[c, j] + gw[j] / n)
            b[c] -= eta * (gb / n)
    return W, b


def svm_fit_numpy(X, Y, lam, lr, epochs):
    """Weights (k, d) and biases (k,) for ``Y`` in {-1, +1}^(n, k)."""
    return _svm_fit_py(X, Y, float(lam), float(lr), int(epochs))


def svm_fit_numba(X, Y, lam, lr, epochs):
    n, d = X.shape
    rows, cols = np.nonzero(X)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    indices = cols.astype(np.int64)
    data = np.ascontiguousarray(X[rows, cols], dtype=np.float64)
    return _svm_fit_nb(indptr, indices, data, n, d, np.ascontiguousarray(Y, dtype=np.float64),
                       float(lam), float(lr), int(epochs))


# --------------------------------------------------------------------------
# Correlation fixpoint
# --------------------------------------------------------------------------
#
# meta[i] is the compact meta-ID of incident i (-1: unknown template), index 0
# is the seed. adj is a symmetric boolean matrix over compact meta-IDs.
# Incident j joins once some other admitted incident i has adj[meta[i], meta[j]].


def _closure_py(meta, adj):
    n = meta.shape[0]
    admitted = np.zeros(n, dtype=np.bool_)
    admitted[0] = True
    if meta[0] < 0:
        return admitted
    known = meta >= 0
    safe_meta = np.where(known, meta, 0)
    # One iteration per pass: admit everything linked to the previous pass.
    while True:
        active = np.zeros(adj.shape[0], dtype=np.bool_)
        active[meta[admitted & known]] = True
        linked = adj[active].any(axis=0)
        new = ~admitted & known & linked[safe_meta]
        if not new.any():
            return admitted
        admitted |= new


@njit
def _closure_nb(meta, adj):
    n = meta.shape[0]
    k = adj.shape[0]
    admitted = np.zeros(n, dtype=np.bool_)
    admitted[0] = True
    if meta[0] < 0:
        return admitted
    # Bucket incidents by meta-ID (counting sort), then run BFS over meta-IDs:
    # reaching meta-ID m admits its whole bucket at once.
    start = np.zeros(k + 1, dtype=np.int64)
    for j in range(1, n):
        if meta[j] >= 0:
            start[meta[j] + 1] += 1
    for m in range(k):
        start[m + 1] += start[m]
    fill = start[:k].copy()
    members = np.empty(start[k], dtype=np.int64)
    for j in range(1, n):
        if meta[j] >= 0:
            members[fill[meta[j]]] = j
            fill[meta[j]] += 1

    reached = np.zeros(k, dtype=np.bool_)
    expanded = np.zeros(k, dtype=np.bool_)
    queue = np.empty(k, dtype=np.int64)
    head = 0
    tail = 1
    queue[0] = meta[0]
    expanded[meta[0]] = True
    while head < tail:
        m = queue[head]
        head += 1
        for m2 in range(k):
            if reached[m2] or not adj[m, m2]:
                continue
            reached[m2] = True
            if start[m2] == start[m2 + 1]:
                continue
            for p in range(start[m2], start[m2 + 1]):
                admitted[members[p]] = True
            if not expanded[m2]:
                expanded[m2] = True
                queue[tail] = m2
                tail += 1
    return admitted


def closure_mask_numpy(meta, adj):
    """Boolean admission mask over incidents for the seed at index 0."""
    return _closure_py(meta, adj)


def closure_mask_numba(meta, adj):
    return _closure_nb(meta, adj)


if USE_NUMBA:
    best_split = best_split_numba
    svm_fit = svm_fit_numba
else:
    best_split = best_split_numpy
    svm_fit = svm_fit_numpy

# The closure stays on numpy under both settings. Windows hold a few hundred
# incidents, where the vectorised passes already match the compiled BFS, and
# loading the compiled function costs ~0.3 s in every fresh process, which a
# one-shot ``cotriage predict`` would pay in full.
closure_mask = closure_mask_numpy
