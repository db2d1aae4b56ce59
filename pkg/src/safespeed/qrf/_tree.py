"""Compiled kernels for growing and querying a single regression tree.

A tree is stored as four parallel arrays in pre-order (root at 0, left child
immediately after its parent):

    feature[i]    split feature, or -1 for a leaf
    threshold[i]  go left when x[feature] <= threshold
    left[i]       index of left child (-1 for leaf)
    right[i]      index of right child (-1 for leaf)
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _splitmix64(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, nogil=True)
def _randbelow(state, n):
    # Modulo bias is ~n / 2**64; negligible for feature counts.
    state, z = _splitmix64(state)
    return state, np.int64(z % np.uint64(n))


@njit(cache=True, nogil=True)
def grow_tree(XT, y, sorted_rows, mtry, min_samples_leaf, max_depth, seed):
    """Grow one CART regression tree on an in-bag multiset of rows.

    ``XT`` is the feature matrix transposed (n_features, n_rows).
    ``sorted_rows[f]`` lists the in-bag row indices (bootstrap duplicates
    included) ordered by feature ``f``; it is partitioned in place so that
    every node owns the same ``[start, end)`` slice in all feature rows.
    ``max_depth < 0`` means unlimited. Returns (feature, threshold, left,
    right) trimmed to the node count.
    """
    n_feat = XT.shape[0]
    m = sorted_rows.shape[1]
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)

    # Work stack entries: start, end, depth, parent (-1 root), is_right_child.
    stack = np.empty((cap, 5), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = m
    stack[0, 2] = 0
    stack[0, 3] = -1
    stack[0, 4] = 0
    top = 1

    state = np.uint64(seed)
    perm = np.arange(n_feat)
    chosen = np.empty(n_feat, dtype=np.int64)
    goes_left = np.zeros(XT.shape[1], dtype=np.bool_)
    buf = np.empty(m, dtype=np.int64)
    n_nodes = 0

    while top > 0:
        top -= 1
        start = stack[top, 0]
        end = stack[top, 1]
        depth = stack[top, 2]
        parent = stack[top, 3]
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if stack[top, 4] == 1:
                right[parent] = node
            else:
                left[parent] = node

        count = end - start
        if count < 2 * min_samples_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        rows0 = sorted_rows[0]
        y_min = y[rows0[start]]
        y_max = y_min
        total = 0.0
        for k in range(start, end):
            v = y[rows0[k]]
            total += v
            if v < y_min:
                y_min = v
            if v > y_max:
                y_max = v
        if y_min == y_max:
            continue

        # Draw features in random order; constant ones do not count toward mtry.
        for k in range(n_feat):
            perm[k] = k
        n_chosen = 0
        for k in range(n_feat):
            if n_chosen == mtry:
                break
            state, r = _randbelow(state, n_feat - k)
            j = k + r
            tmp = perm[k]
            perm[k] = perm[j]
            perm[j] = tmp
            f = perm[k]
            if XT[f, sorted_rows[f, end - 1]] > XT[f, sorted_rows[f, start]]:
                chosen[n_chosen] = f
                n_chosen += 1
        if n_chosen == 0:
            continue
        cand = np.sort(chosen[:n_chosen])

        # Maximizing S_L^2/n_L + S_R^2/n_R is equivalent to maximal variance reduction.
        best_score = -np.inf
        best_feat = -1
        best_thr = 0.0
        for c in range(n_chosen):
            f = cand[c]
            rows = sorted_rows[f]
            xf = XT[f]
            left_sum = 0.0
            for i in range(1, count):
                left_sum += y[rows[start + i - 1]]
                if i < min_samples_leaf or count - i < min_samples_leaf:
                    continue
                a = xf[rows[start + i - 1]]
                b = xf[rows[start + i]]
                if not b > a:
                    continue
                right_sum = total - left_sum
                score = left_sum * left_sum / i + right_sum * right_sum / (count - i)
                if score > best_score:
                    best_score = score
                    best_feat = f
                    thr = 0.5 * (a + b)
                    if not thr < b:
                        thr = a
                    best_thr = thr
        if best_feat < 0:
            continue

        # Stable partition of every feature's slice: left rows first.
        xb = XT[best_feat]
        for k in range(start, end):
            r = rows0[k]
            goes_left[r] = xb[r] <= best_thr
        mid = start
        for f in range(n_feat):
            rows = sorted_rows[f]
            nl = 0
            nr = 0
            for k in range(start, end):
                r = rows[k]
                if goes_left[r]:
                    rows[start + nl] = r
                    nl += 1
                else:
                    buf[nr] = r
                    nr += 1
            for k in range(nr):
                rows[start + nl + k] = buf[k]
            mid = start + nl
        feature[node] = best_feat
        threshold[node] = best_thr
        # Push right first so the left subtree is emitted next (pre-order).
        stack[top, 0] = mid
        stack[top, 1] = end
        stack[top, 2] = depth + 1
        stack[top, 3] = node
        stack[top, 4] = 1
        top += 1
        stack[top, 0] = start
        stack[top, 1] = mid
        stack[top, 2] = depth + 1
        stack[top, 3] = node
        stack[top, 4] = 0
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def expand_sorted(global_order, counts, m):
    """Per-feature sorted in-bag rows from a global per-feature row order.

    Row ``r`` is repeated ``counts[r]`` times, matching its bootstrap draws.
    """
    n_feat = global_order.shape[0]
    out = np.empty((n_feat, m), dtype=np.int64)
    for f in range(n_feat):
        k = 0
        for r in global_order[f]:
            for _ in range(counts[r]):
                out[f, k] = r
                k += 1
    return out


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf node index reached by every row of ``X``."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for r in range(n):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out
