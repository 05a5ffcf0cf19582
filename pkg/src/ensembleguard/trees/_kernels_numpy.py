"""Pure-numpy twins of the compiled kernels in ``_kernels_numba``.

Same signatures, same tie-breaking.  The Gini, Newton, histogram and
traversal kernels reproduce the compiled results bit for bit (the
accumulation order is identical); the oblivious search sums its level
score in a different order and can differ in the last ulp.
"""
import numpy as np


def _grouped(order_row, node_of):
    nodes = node_of[order_row]
    perm = np.argsort(nodes, kind="stable")
    return order_row[perm], nodes[perm]


def _first_max_per_node(k, gain, n_nodes):
    node_max = np.full(n_nodes, -np.inf)
    np.maximum.at(node_max, k, gain)
    hit = np.nonzero(gain == node_max[k])[0]
    uk, first = np.unique(k[hit], return_index=True)
    return uk, hit[first], node_max


def best_splits_gini(XT, order, node_of, y, w, node_w, node_counts, min_leaf):
    n_nodes, n_classes = node_counts.shape
    p, m = order.shape
    best_gain = np.full(n_nodes, -np.inf)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    parent = np.zeros(n_nodes)
    for c in range(n_classes):
        parent += node_counts[:, c] * node_counts[:, c]
    parent = parent / node_w
    for f in range(p):
        o, nodes = _grouped(order[f], node_of)
        v = XT[f, o]
        j = np.nonzero((nodes[1:] == nodes[:-1]) & (v[1:] > v[:-1]))[0] + 1
        if j.size == 0:
            continue
        ww = w[o]
        onehot = np.zeros((m, n_classes))
        onehot[np.arange(m), y[o]] = ww
        cum = np.cumsum(onehot, axis=0)
        cumw = np.cumsum(ww)
        k = nodes[j]
        s = np.searchsorted(nodes, np.arange(n_nodes))[k]
        has_base = s > 0
        base = np.where(has_base[:, None], cum[s - 1], 0.0)
        lc = cum[j - 1] - base
        wl = cumw[j - 1] - np.where(has_base, cumw[s - 1], 0.0)
        wr = node_w[k] - wl
        ok = (wl >= min_leaf) & (wr >= min_leaf)
        if not ok.any():
            continue
        j, k, lc, wl, wr = j[ok], k[ok], lc[ok], wl[ok], wr[ok]
        rc = node_counts[k] - lc
        sl = np.zeros(j.size)
        sr = np.zeros(j.size)
        for c in range(n_classes):
            sl += lc[:, c] * lc[:, c]
            sr += rc[:, c] * rc[:, c]
        gain = (sl / wl + sr / wr - parent[k]) / node_w[k]
        uk, pos, node_max = _first_max_per_node(k, gain, n_nodes)
        better = node_max[uk] > best_gain[uk]
        uk, pos = uk[better], pos[better]
        best_gain[uk] = gain[pos]
        best_feat[uk] = f
        best_thr[uk] = (v[j[pos] - 1] + v[j[pos]]) / 2.0
    return best_feat, best_thr, best_gain


def _score(r, h, lam):
    d = h + lam
    out = np.zeros_like(d)
    pos = d > 0.0
    out[pos] = r[pos] * r[pos] / d[pos]
    return out


def best_splits_newton(XT, order, node_of, r, h, cnt, node_r, node_h, node_cnt,
                       lam, min_leaf):
    n_nodes = node_r.shape[0]
    p, m = order.shape
    best_gain = np.full(n_nodes, -np.inf)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    parent = _score(node_r, node_h, lam)
    for f in range(p):
        o, nodes = _grouped(order[f], node_of)
        bounds = np.searchsorted(nodes, np.arange(n_nodes + 1))
        for k in range(n_nodes):
            seg = o[bounds[k]:bounds[k + 1]]
            if seg.size < 2:
                continue
            v = XT[f, seg]
            j = np.nonzero(v[1:] > v[:-1])[0]
            if j.size == 0:
                continue
            rl = np.cumsum(r[seg])[j]
            hl = np.cumsum(h[seg])[j]
            cl = np.cumsum(cnt[seg])[j]
            cr = node_cnt[k] - cl
            ok = (cl >= min_leaf) & (cr >= min_leaf)
            if not ok.any():
                continue
            j, rl, hl = j[ok], rl[ok], hl[ok]
            gain = (_score(rl, hl, lam)
                    + _score(node_r[k] - rl, node_h[k] - hl, lam)
                    - parent[k])
            pos = int(np.argmax(gain))
            if gain[pos] > best_gain[k]:
                best_gain[k] = gain[pos]
                best_feat[k] = f
                best_thr[k] = (v[j[pos]] + v[j[pos] + 1]) / 2.0
    return best_feat, best_thr, best_gain


def best_split_oblivious(XT, order, node_of, r, h, node_r, node_h, lam):
    n_nodes = node_r.shape[0]
    p, m = order.shape
    parent = float(_score(node_r, node_h, lam).sum())
    best_gain, best_feat, best_thr = -np.inf, -1, 0.0
    rows = np.arange(m)
    for f in range(p):
        o = order[f]
        v = XT[f, o]
        j = np.nonzero(v[1:] > v[:-1])[0]
        if j.size == 0:
            continue
        k = node_of[o]
        oh = np.zeros((m, n_nodes))
        oh[rows, k] = r[o]
        rl = np.cumsum(oh, axis=0)[j]
        oh[:] = 0.0
        oh[rows, k] = h[o]
        hl = np.cumsum(oh, axis=0)[j]
        total = (_score(rl, hl, lam) + _score(node_r - rl, node_h - hl, lam)).sum(axis=1)
        gain = total - parent
        pos = int(np.argmax(gain))
        if gain[pos] > best_gain:
            best_gain = float(gain[pos])
            best_feat = f
            best_thr = (v[j[pos]] + v[j[pos] + 1]) / 2.0
    return best_feat, best_thr, best_gain


def build_histograms(binned, idx, r, h, n_bins):
    p = binned.shape[1]
    hist = np.zeros((p, n_bins, 3))
    rr, hh = r[idx], h[idx]
    for f in range(p):
        b = binned[idx, f]
        hist[f, :, 0] = np.bincount(b, weights=rr, minlength=n_bins)
        hist[f, :, 1] = np.bincount(b, weights=hh, minlength=n_bins)
        hist[f, :, 2] = np.bincount(b, minlength=n_bins)
    return hist


def apply_tree(X, feature, threshold, left, right):
    node = np.zeros(X.shape[0], dtype=np.int64)
    live = np.nonzero(feature[node] >= 0)[0]
    while live.size:
        cur = node[live]
        go_left = X[live, feature[cur]] <= threshold[cur]
        node[live] = np.where(go_left, left[cur], right[cur])
        live = live[feature[node[live]] >= 0]
    return node
