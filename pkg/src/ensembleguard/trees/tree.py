"""Flat-array decision trees and the four growing strategies.

A :class:`Tree` stores nodes in depth-first (pre-)order.  Internal nodes
route ``x[feature] <= threshold`` to ``left``; leaves have ``feature == -1``
and carry a row of ``value`` (a class distribution for classification
trees, a single score for boosting trees).
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .. import _backend

kernels = _backend.load_kernels()

# Splits whose gain does not clear this (relative) margin are rounding noise.
GAIN_TOL = 1e-10


@dataclass(eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.predict_value(X)

    def same_as(self, other: "Tree") -> bool:
        return (self.n_features == other.n_features
                and np.array_equal(self.feature, other.feature)
                and np.array_equal(self.threshold, other.threshold)
                and np.array_equal(self.left, other.left)
                and np.array_equal(self.right, other.right)
                and np.array_equal(self.value, other.value))


class _Builder:
    def __init__(self, width: int):
        self.width = width
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []

    def add(self, value) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(np.asarray(value, dtype=np.float64).reshape(self.width))
        return len(self.feature) - 1

    def split(self, nid: int, feature: int, threshold: float, left: int, right: int):
        self.feature[nid] = int(feature)
        self.threshold[nid] = float(threshold)
        self.left[nid] = left
        self.right[nid] = right

    def build(self, n_features: int) -> Tree:
        # renumber to pre-order so the stored layout matches the persisted one
        new_id = {}
        stack = [0]
        visit = []
        while stack:
            nid = stack.pop()
            new_id[nid] = len(visit)
            visit.append(nid)
            if self.feature[nid] >= 0:
                stack.append(self.right[nid])
                stack.append(self.left[nid])
        feat = np.array([self.feature[i] for i in visit], dtype=np.int64)
        thr = np.array([self.threshold[i] for i in visit], dtype=np.float64)
        left = np.array([new_id[self.left[i]] if self.feature[i] >= 0 else -1
                         for i in visit], dtype=np.int64)
        right = np.array([new_id[self.right[i]] if self.feature[i] >= 0 else -1
                          for i in visit], dtype=np.int64)
        value = np.stack([self.value[i] for i in visit])
        return Tree(feat, thr, left, right, value, n_features)


def sorted_order(X: np.ndarray) -> np.ndarray:
    """Per-feature stable argsort, shape ``(p, n)``.

    Split kernels read feature values as ``XT[f, i]`` from the transposed
    (feature-major) matrix, which keeps each scan inside one contiguous row.
    """
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T).astype(np.int64)


def _compact(order: np.ndarray, node_of: np.ndarray) -> np.ndarray:
    keep = node_of[order] >= 0
    p = order.shape[0]
    return np.ascontiguousarray(order[keep].reshape(p, -1))


def _route(X, node_of, feat, thr):
    """Send every live sample of slot k to child slot 2t or 2t+1.

    ``feat``/``thr`` are indexed by slot; slots with ``feat < 0`` retire.
    Returns the new node_of and, per slot, the index t of its split (or -1).
    """
    split_idx = np.full(feat.shape[0], -1, dtype=np.int64)
    splitting = np.nonzero(feat >= 0)[0]
    split_idx[splitting] = np.arange(splitting.size)
    live = np.nonzero(node_of >= 0)[0]
    k = node_of[live]
    t = split_idx[k]
    new = np.full(node_of.shape[0], -1, dtype=np.int64)
    moving = t >= 0
    live, k, t = live[moving], k[moving], t[moving]
    go_right = X[live, feat[k]] > thr[k]
    new[live] = 2 * t + go_right
    return new, split_idx


def grow_gini_tree(X, y, w, n_classes, order=None, max_depth=None, min_samples_leaf=1, XT=None):
    """Greedy CART classification tree with Gini impurity, grown level by level.

    ``w`` holds non-negative integer sample weights (bootstrap counts);
    zero-weight samples are ignored.  Any impure node with a legal split is
    split, even when the best Gini gain is zero (XOR-like data needs it).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    w = np.asarray(w, dtype=np.float64)
    n, p = X.shape
    if XT is None:
        XT = np.ascontiguousarray(X.T)
    if order is None:
        order = sorted_order(X)
    node_of = np.where(w > 0, 0, -1).astype(np.int64)
    order = _compact(order, node_of)
    b = _Builder(n_classes)
    counts = np.bincount(y, weights=w, minlength=n_classes).astype(np.float64)
    total = counts.sum()
    root = b.add(counts / total if total > 0 else np.full(n_classes, 1.0 / n_classes))
    frontier = [(root, counts, 0)]
    min_leaf = float(min_samples_leaf)
    while frontier:
        slot = np.full(len(frontier), -1, dtype=np.int64)
        chosen = []
        for s, (nid, c, depth) in enumerate(frontier):
            if ((max_depth is None or depth < max_depth)
                    and c.sum() >= 2 * min_leaf and np.count_nonzero(c) > 1):
                slot[s] = len(chosen)
                chosen.append(s)
        live = node_of >= 0
        node_of[live] = slot[node_of[live]]
        if not chosen:
            break
        order = _compact(order, node_of)
        node_counts = np.stack([frontier[s][1] for s in chosen])
        node_w = node_counts.sum(axis=1)
        feat, thr, _ = kernels.best_splits_gini(
            XT, order, node_of, y, w, node_w, node_counts, min_leaf)
        node_of, split_idx = _route(X, node_of, feat, thr)
        n_split = int((feat >= 0).sum())
        if n_split == 0:
            break
        live = node_of >= 0
        child_counts = np.bincount(
            node_of[live] * n_classes + y[live], weights=w[live],
            minlength=2 * n_split * n_classes).reshape(2 * n_split, n_classes)
        nxt = []
        for k, s in enumerate(chosen):
            t = split_idx[k]
            if t < 0:
                continue
            nid, _, depth = frontier[s]
            lc, rc = child_counts[2 * t], child_counts[2 * t + 1]
            li = b.add(lc / lc.sum())
            ri = b.add(rc / rc.sum())
            b.split(nid, feat[k], thr[k], li, ri)
            nxt.append((li, lc, depth + 1))
            nxt.append((ri, rc, depth + 1))
        frontier = nxt
    return b.build(p)


def _leaf_value(r, h, lam):
    d = h + lam
    return r / d if d > 0 else 0.0


def grow_newton_tree(X, r, h, lam, order=None, max_depth=6, min_samples_leaf=1, XT=None):
    """Regression tree on (negative gradient, hessian) pairs, depth-limited.

    Leaves hold ``sum(r) / (sum(h) + lam)``; with unit hessians and
    ``lam = 0`` that is the mean residual.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    n, p = X.shape
    if XT is None:
        XT = np.ascontiguousarray(X.T)
    cnt = np.ones(n)
    if order is None:
        order = sorted_order(X)
    node_of = np.zeros(n, dtype=np.int64)
    b = _Builder(1)
    stats = (r.sum(), h.sum(), float(n))
    root = b.add(_leaf_value(stats[0], stats[1], lam))
    frontier = [(root, stats, 0)]
    min_leaf = float(min_samples_leaf)
    while frontier:
        slot = np.full(len(frontier), -1, dtype=np.int64)
        chosen = []
        for s, (nid, st, depth) in enumerate(frontier):
            if depth < max_depth and st[2] >= 2 * min_leaf:
                slot[s] = len(chosen)
                chosen.append(s)
        live = node_of >= 0
        node_of[live] = slot[node_of[live]]
        if not chosen:
            break
        order = _compact(order, node_of)
        node_r = np.array([frontier[s][1][0] for s in chosen])
        node_h = np.array([frontier[s][1][1] for s in chosen])
        node_c = np.array([frontier[s][1][2] for s in chosen])
        feat, thr, gain = kernels.best_splits_newton(
            XT, order, node_of, r, h, cnt, node_r, node_h, node_c, float(lam), min_leaf)
        parent = np.where(node_h + lam > 0, node_r ** 2 / np.maximum(node_h + lam, 1e-300), 0.0)
        feat = np.where(gain > GAIN_TOL * (1.0 + parent), feat, -1)
        node_of, split_idx = _route(X, node_of, feat, thr)
        n_split = int((feat >= 0).sum())
        if n_split == 0:
            break
        live = node_of >= 0
        m = 2 * n_split
        cr = np.bincount(node_of[live], weights=r[live], minlength=m)
        ch = np.bincount(node_of[live], weights=h[live], minlength=m)
        cc = np.bincount(node_of[live], minlength=m).astype(np.float64)
        nxt = []
        for k, s in enumerate(chosen):
            t = split_idx[k]
            if t < 0:
                continue
            nid, _, depth = frontier[s]
            kids = []
            for side in (2 * t, 2 * t + 1):
                st = (cr[side], ch[side], cc[side])
                kids.append((b.add(_leaf_value(st[0], st[1], lam)), st, depth + 1))
            b.split(nid, feat[k], thr[k], kids[0][0], kids[1][0])
            nxt.extend(kids)
        frontier = nxt
    return b.build(p)


def grow_oblivious_tree(X, r, h, lam, order=None, max_depth=6, XT=None):
    """Symmetric tree: every node at a given depth uses the same split."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    n, p = X.shape
    if XT is None:
        XT = np.ascontiguousarray(X.T)
    if order is None:
        order = sorted_order(X)
    node_of = np.zeros(n, dtype=np.int64)
    levels = []
    for depth in range(max_depth):
        k = 1 << depth
        node_r = np.bincount(node_of, weights=r, minlength=k)
        node_h = np.bincount(node_of, weights=h, minlength=k)
        f, thr, gain = kernels.best_split_oblivious(XT, order, node_of, r, h, node_r, node_h, float(lam))
        parent = float(np.where(node_h + lam > 0, node_r ** 2 / np.maximum(node_h + lam, 1e-300), 0.0).sum())
        if f < 0 or not gain > GAIN_TOL * (1.0 + parent):
            break
        levels.append((int(f), float(thr)))
        node_of = 2 * node_of + (X[:, f] > thr)
    k = 1 << len(levels)
    leaf_r = np.bincount(node_of, weights=r, minlength=k)
    leaf_h = np.bincount(node_of, weights=h, minlength=k)
    b = _Builder(1)

    def build(depth, path):
        if depth == len(levels):
            return b.add(_leaf_value(leaf_r[path], leaf_h[path], lam))
        nid = b.add(0.0)
        li = build(depth + 1, 2 * path)
        ri = build(depth + 1, 2 * path + 1)
        b.split(nid, levels[depth][0], levels[depth][1], li, ri)
        return nid

    build(0, 0)
    tree = b.build(p)
    tree.levels = levels
    return tree


# ---------------------------------------------------------------- histograms

def bin_edges(x: np.ndarray, n_bins: int) -> np.ndarray:
    """Cut points for one feature; bin(x) = number of edges strictly below x."""
    u = np.unique(x)
    if u.size <= 1:
        return np.empty(0)
    if u.size <= n_bins:
        return (u[:-1] + u[1:]) / 2.0
    qs = np.quantile(x, np.linspace(0.0, 1.0, n_bins + 1)[1:-1], method="lower")
    cuts = np.unique(qs)
    nxt = np.searchsorted(u, cuts, side="right")
    cuts, nxt = cuts[nxt < u.size], nxt[nxt < u.size]
    return np.unique((cuts + u[nxt]) / 2.0)


def bin_matrix(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    out = np.empty(X.shape, dtype=np.int32)
    for f, e in enumerate(edges):
        out[:, f] = np.searchsorted(e, X[:, f], side="left")
    return out


def _best_hist_split(hist, n_edges, lam, min_leaf):
    cum = np.cumsum(hist, axis=1)[:, :-1, :]
    tot = hist.sum(axis=1)
    rl, hl, cl = cum[..., 0], cum[..., 1], cum[..., 2]
    rr = tot[:, None, 0] - rl
    hr = tot[:, None, 1] - hl
    cr = tot[:, None, 2] - cl
    valid = (np.arange(rl.shape[1])[None, :] < n_edges[:, None]) & (cl >= min_leaf) & (cr >= min_leaf)
    with np.errstate(divide="ignore", invalid="ignore"):
        sl = np.where(hl + lam > 0, rl * rl / (hl + lam), 0.0)
        sr = np.where(hr + lam > 0, rr * rr / (hr + lam), 0.0)
    r0, h0 = tot[0, 0], tot[0, 1]
    parent = r0 * r0 / (h0 + lam) if h0 + lam > 0 else 0.0
    gain = np.where(valid, sl + sr - parent, -np.inf)
    pos = int(np.argmax(gain))
    f, b = divmod(pos, gain.shape[1])
    return float(gain[f, b]), f, b, parent


def grow_leafwise_tree(binned, edges, r, h, lam, max_leaves=31, min_samples_leaf=1,
                       max_depth=None, n_bins=None):
    """Histogram tree grown best-first until ``max_leaves`` leaves exist."""
    n, p = binned.shape
    if n_bins is None:
        n_bins = max(len(e) for e in edges) + 1 if edges else 1
    n_bins = max(int(n_bins), 1)
    n_edges = np.array([len(e) for e in edges], dtype=np.int64)
    r = np.asarray(r, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    min_leaf = float(min_samples_leaf)
    b = _Builder(1)

    def make_leaf(idx, hist, depth):
        rs, hs = hist[0, :, 0].sum(), hist[0, :, 1].sum()
        nid = b.add(_leaf_value(rs, hs, lam))
        if (max_depth is not None and depth >= max_depth) or idx.size < 2 * min_leaf:
            best = (-np.inf, -1, -1, 0.0)
        else:
            best = _best_hist_split(hist, n_edges, lam, min_leaf)
        return {"id": nid, "idx": idx, "hist": hist, "depth": depth, "best": best}

    all_idx = np.arange(n, dtype=np.int64)
    root = make_leaf(all_idx, kernels.build_histograms(binned, all_idx, r, h, n_bins), 0)
    heap = [(-root["best"][0], root["id"], root)]
    n_leaves = 1
    while heap and n_leaves < max_leaves:
        neg_gain, _, leaf = heapq.heappop(heap)
        gain, f, bin_, parent = leaf["best"]
        if f < 0 or not gain > GAIN_TOL * (1.0 + parent):
            break
        idx = leaf["idx"]
        go_left = binned[idx, f] <= bin_
        li, ri = idx[go_left], idx[~go_left]
        small, large = (li, ri) if li.size <= ri.size else (ri, li)
        h_small = kernels.build_histograms(binned, small, r, h, n_bins)
        h_large = leaf["hist"] - h_small
        hl, hr = (h_small, h_large) if small is li else (h_large, h_small)
        lnode = make_leaf(li, hl, leaf["depth"] + 1)
        rnode = make_leaf(ri, hr, leaf["depth"] + 1)
        b.split(leaf["id"], f, edges[f][bin_], lnode["id"], rnode["id"])
        leaf["hist"] = None
        n_leaves += 1
        for node in (lnode, rnode):
            heapq.heappush(heap, (-node["best"][0], node["id"], node))
    return b.build(p)
