"""Compiled split-search and traversal kernels.

Every function here has a twin with the same signature and the same
semantics in ``_kernels_numpy``.  Conventions shared by both:

* ``XT`` is the feature-major ``(p, n)`` copy of the data matrix.
* ``order`` is a ``(p, m)`` array; row ``f`` lists the active sample ids
  sorted by ``X[:, f]`` (stable).  All listed samples are active.
* ``node_of[i]`` is the frontier slot of sample ``i``.
* Split candidates sit between consecutive distinct values of a node;
  the threshold is their midpoint and ``x <= threshold`` goes left.
* Ties in gain keep the earlier candidate: lower feature, then lower
  threshold.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def best_splits_gini(XT, order, node_of, y, w, node_w, node_counts, min_leaf):
    n_nodes, n_classes = node_counts.shape
    p, m = order.shape
    best_gain = np.full(n_nodes, -np.inf)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    parent = np.zeros(n_nodes)
    for k in range(n_nodes):
        s = 0.0
        for c in range(n_classes):
            s += node_counts[k, c] * node_counts[k, c]
        parent[k] = s / node_w[k]
    left = np.zeros((n_nodes, n_classes))
    left_w = np.zeros(n_nodes)
    last = np.zeros(n_nodes)
    for f in range(p):
        left[:, :] = 0.0
        left_w[:] = 0.0
        for j in range(m):
            i = order[f, j]
            k = node_of[i]
            v = XT[f, i]
            if left_w[k] > 0.0 and v > last[k]:
                wl = left_w[k]
                wr = node_w[k] - wl
                if wl >= min_leaf and wr >= min_leaf:
                    sl = 0.0
                    sr = 0.0
                    for c in range(n_classes):
                        lc = left[k, c]
                        rc = node_counts[k, c] - lc
                        sl += lc * lc
                        sr += rc * rc
                    gain = (sl / wl + sr / wr - parent[k]) / node_w[k]
                    if gain > best_gain[k]:
                        best_gain[k] = gain
                        best_feat[k] = f
                        best_thr[k] = (last[k] + v) / 2.0
            left[k, y[i]] += w[i]
            left_w[k] += w[i]
            last[k] = v
    return best_feat, best_thr, best_gain


@njit(cache=True)
def _score(r, h, lam):
    d = h + lam
    if d <= 0.0:
        return 0.0
    return r * r / d


@njit(cache=True)
def best_splits_newton(XT, order, node_of, r, h, cnt, node_r, node_h, node_cnt,
                       lam, min_leaf):
    n_nodes = node_r.shape[0]
    p, m = order.shape
    best_gain = np.full(n_nodes, -np.inf)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    parent = np.zeros(n_nodes)
    for k in range(n_nodes):
        parent[k] = _score(node_r[k], node_h[k], lam)
    rl = np.zeros(n_nodes)
    hl = np.zeros(n_nodes)
    cl = np.zeros(n_nodes)
    last = np.zeros(n_nodes)
    for f in range(p):
        rl[:] = 0.0
        hl[:] = 0.0
        cl[:] = 0.0
        for j in range(m):
            i = order[f, j]
            k = node_of[i]
            v = XT[f, i]
            if cl[k] > 0.0 and v > last[k]:
                cr = node_cnt[k] - cl[k]
                if cl[k] >= min_leaf and cr >= min_leaf:
                    gain = (_score(rl[k], hl[k], lam)
                            + _score(node_r[k] - rl[k], node_h[k] - hl[k], lam)
                            - parent[k])
                    if gain > best_gain[k]:
                        best_gain[k] = gain
                        best_feat[k] = f
                        best_thr[k] = (last[k] + v) / 2.0
            rl[k] += r[i]
            hl[k] += h[i]
            cl[k] += cnt[i]
            last[k] = v
    return best_feat, best_thr, best_gain


@njit(cache=True)
def best_split_oblivious(XT, order, node_of, r, h, node_r, node_h, lam):
    """One (feature, threshold) shared by every node of the level."""
    n_nodes = node_r.shape[0]
    p, m = order.shape
    parent = 0.0
    for k in range(n_nodes):
        parent += _score(node_r[k], node_h[k], lam)
    best_gain = -np.inf
    best_feat = -1
    best_thr = 0.0
    rl = np.zeros(n_nodes)
    hl = np.zeros(n_nodes)
    term = np.zeros(n_nodes)
    for f in range(p):
        total = 0.0
        for k in range(n_nodes):
            rl[k] = 0.0
            hl[k] = 0.0
            term[k] = _score(node_r[k], node_h[k], lam)
            total += term[k]
        prev = 0.0
        for j in range(m):
            i = order[f, j]
            v = XT[f, i]
            if j > 0 and v > prev:
                gain = total - parent
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    best_thr = (prev + v) / 2.0
            k = node_of[i]
            rl[k] += r[i]
            hl[k] += h[i]
            new = (_score(rl[k], hl[k], lam)
                   + _score(node_r[k] - rl[k], node_h[k] - hl[k], lam))
            total += new - term[k]
            term[k] = new
            prev = v
    return best_feat, best_thr, best_gain


@njit(cache=True)
def build_histograms(binned, idx, r, h, n_bins):
    p = binned.shape[1]
    hist = np.zeros((p, n_bins, 3))
    for j in range(idx.shape[0]):
        i = idx[j]
        for f in range(p):
            b = binned[i, f]
            hist[f, b, 0] += r[i]
            hist[f, b, 1] += h[i]
            hist[f, b, 2] += 1.0
    return hist


@njit(cache=True)
def apply_tree(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
