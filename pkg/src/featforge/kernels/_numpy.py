"""Vectorised numpy CART kernels (fallback when numba is disabled).

Same tree, same node numbering and bitwise-identical split scores as the
compiled path; the per-feature scan is done with cumulative sums instead of
an explicit loop.
"""
import numpy as np

IMPURITY_TOL = 1e-12


def _node_stats(y, n_classes):
    n = y.shape[0]
    if n_classes > 0:
        counts = np.bincount(y.astype(np.int64), minlength=n_classes).astype(float)
        return n - np.sum(counts * counts) / n, counts
    cs = np.cumsum(y)
    css = np.cumsum(y * y)
    s, ss = cs[-1], css[-1]
    return ss - s * s / n, np.array([s / n])


def _split_scores(xs, ys, n_classes, min_leaf):
    n = xs.shape[0]
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    if n_classes > 0:
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), ys.astype(np.int64)] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        total = np.bincount(ys.astype(np.int64), minlength=n_classes).astype(float)
        right = total - left
        sql = np.sum(left * left, axis=1)
        sqr = np.sum(right * right, axis=1)
        scores = (nl - sql / nl) + (nr - sqr / nr)
    else:
        cs = np.cumsum(ys)
        css = np.cumsum(ys * ys)
        s_tot, ss_tot = cs[-1], css[-1]
        sl = cs[:-1]
        sr = s_tot - sl
        scores = (css[:-1] - sl * sl / nl) + ((ss_tot - css[:-1]) - sr * sr / nr)
    ok = (nl >= min_leaf) & (nr >= min_leaf) & (xs[:-1] != xs[1:])
    return np.where(ok, scores, np.inf)


def build_tree(X, y, n_classes, max_depth, min_leaf, feat_keys, n_sub):
    n, d = X.shape
    n_out = n_classes if n_classes > 0 else 1
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(rows, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        m = rows.shape[0]
        impurity, val = _node_stats(y[rows], n_classes)
        value.append(val)
        if depth >= max_depth or m < 2 * min_leaf or impurity <= IMPURITY_TOL * max(1.0, m):
            return node
        if n_sub < d:
            cand = np.sort(np.argsort(feat_keys[node], kind="stable")[:n_sub])
        else:
            cand = np.arange(d)
        best_score, best_f, best_thr = np.inf, -1, 0.0
        for f in cand:
            vals = X[rows, f]
            o = np.argsort(vals, kind="stable")
            xs = vals[o]
            if m < 2:
                continue
            scores = _split_scores(xs, y[rows][o], n_classes, min_leaf)
            j = int(np.argmin(scores))
            if scores[j] < best_score:
                best_score = scores[j]
                best_f = int(f)
                thr = 0.5 * (xs[j] + xs[j + 1])
                best_thr = xs[j] if thr >= xs[j + 1] else thr
        if best_f < 0:
            return node
        go_left = X[rows, best_f] <= best_thr
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = grow(rows[go_left], depth + 1)
        right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(np.arange(n), 0)
    return (np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(value, dtype=float).reshape(len(feature), n_out))


def predict_leaves(feature, threshold, left, right, X):
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        r = rows[active]
        nd = node[r]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return node
