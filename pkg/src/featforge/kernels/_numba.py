"""Compiled CART kernels.

Both builders in this package grow the same tree: nodes are numbered in
preorder, candidate features at node ``i`` are the ``n_sub`` lowest entries of
``feat_keys[i]`` (scanned in ascending index order), rows are sorted stably
and split positions only fall between distinct values.  The arithmetic in the
scans mirrors ``_numpy`` operation for operation so results agree bitwise.
"""
import numpy as np
from numba import njit

IMPURITY_TOL = 1e-12


@njit(cache=True)
def _node_stats(y_sorted, n_classes, value_row):
    n = y_sorted.shape[0]
    if n_classes > 0:
        for c in range(n_classes):
            value_row[c] = 0.0
        for i in range(n):
            value_row[int(y_sorted[i])] += 1.0
        sq = 0.0
        for c in range(n_classes):
            sq += value_row[c] * value_row[c]
        return n - sq / n
    s = 0.0
    ss = 0.0
    for i in range(n):
        s += y_sorted[i]
        ss += y_sorted[i] * y_sorted[i]
    value_row[0] = s / n
    return ss - s * s / n


@njit(cache=True)
def _scan_feature(xs, ys, n, n_classes, min_leaf, best, left, total, cs, css):
    """Best split on the first ``n`` entries of a sorted feature.

    ``best`` = [score, threshold] is updated in place; the remaining arrays
    are scratch space.  Returns True when ``best`` improved.
    """
    improved = False
    if n_classes > 0:
        for c in range(n_classes):
            left[c] = 0.0
            total[c] = 0.0
        for i in range(n):
            total[int(ys[i])] += 1.0
        for i in range(n - 1):
            left[int(ys[i])] += 1.0
            nl = i + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf or xs[i] == xs[i + 1]:
                continue
            sql = 0.0
            sqr = 0.0
            for c in range(n_classes):
                r = total[c] - left[c]
                sql += left[c] * left[c]
                sqr += r * r
            score = (nl - sql / nl) + (nr - sqr / nr)
            if score < best[0]:
                best[0] = score
                thr = 0.5 * (xs[i] + xs[i + 1])
                if thr >= xs[i + 1]:
                    thr = xs[i]
                best[1] = thr
                improved = True
        return improved
    s = 0.0
    ss = 0.0
    for i in range(n):
        s += ys[i]
        ss += ys[i] * ys[i]
        cs[i] = s
        css[i] = ss
    s_tot = cs[n - 1]
    ss_tot = css[n - 1]
    for i in range(n - 1):
        nl = i + 1
        nr = n - nl
        if nl < min_leaf or nr < min_leaf or xs[i] == xs[i + 1]:
            continue
        sl = cs[i]
        sr = s_tot - sl
        score = (css[i] - sl * sl / nl) + ((ss_tot - css[i]) - sr * sr / nr)
        if score < best[0]:
            best[0] = score
            thr = 0.5 * (xs[i] + xs[i + 1])
            if thr >= xs[i + 1]:
                thr = xs[i]
            best[1] = thr
            improved = True
    return improved


@njit(cache=True)
def build_tree(X, y, n_classes, max_depth, min_leaf, feat_keys, n_sub):
    n, d = X.shape
    max_nodes = feat_keys.shape[0]
    n_out = n_classes if n_classes > 0 else 1
    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros((max_nodes, n_out))

    idx = np.arange(n)
    buf = np.empty(n, np.int64)
    st_start = np.empty(max_nodes + 1, np.int64)
    st_end = np.empty(max_nodes + 1, np.int64)
    st_depth = np.empty(max_nodes + 1, np.int64)
    st_parent = np.empty(max_nodes + 1, np.int64)
    st_side = np.empty(max_nodes + 1, np.int64)
    sp = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_parent[0] = -1
    st_side[0] = 0
    sp = 1
    count = 0
    best = np.empty(2)
    vals = np.empty(n)
    xs = np.empty(n)
    ys = np.empty(n)
    cs = np.empty(n)
    css = np.empty(n)
    cl = np.empty(max(n_classes, 1))
    ct = np.empty(max(n_classes, 1))

    while sp > 0:
        sp -= 1
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        parent = st_parent[sp]
        node = count
        count += 1
        if parent >= 0:
            if st_side[sp] == 0:
                left[parent] = node
            else:
                right[parent] = node

        rows = idx[start:end]
        m = end - start
        for j in range(m):
            ys[j] = y[rows[j]]
        impurity = _node_stats(ys[:m], n_classes, value[node])
        if depth >= max_depth or m < 2 * min_leaf or impurity <= IMPURITY_TOL * max(1.0, m):
            continue

        if n_sub < d:
            order = np.argsort(feat_keys[node], kind="mergesort")
            cand = np.sort(order[:n_sub])
        else:
            cand = np.arange(d)

        best[0] = np.inf
        best[1] = 0.0
        best_f = -1
        for f in cand:
            for j in range(m):
                vals[j] = X[rows[j], f]
            o = np.argsort(vals[:m], kind="mergesort")
            for j in range(m):
                xs[j] = vals[o[j]]
                ys[j] = y[rows[o[j]]]
            if _scan_feature(xs, ys, m, n_classes, min_leaf, best, cl, ct, cs, css):
                best_f = f
        if best_f < 0:
            continue

        thr = best[1]
        nl = 0
        for j in range(m):
            r = rows[j]
            if X[r, best_f] <= thr:
                buf[nl] = r
                nl += 1
        k = nl
        for j in range(m):
            r = rows[j]
            if X[r, best_f] > thr:
                buf[k] = r
                k += 1
        for j in range(m):
            idx[start + j] = buf[j]

        feature[node] = best_f
        threshold[node] = thr
        # right pushed first so the left subtree is numbered next (preorder)
        st_start[sp] = start + nl
        st_end[sp] = end
        st_depth[sp] = depth + 1
        st_parent[sp] = node
        st_side[sp] = 1
        sp += 1
        st_start[sp] = start
        st_end[sp] = start + nl
        st_depth[sp] = depth + 1
        st_parent[sp] = node
        st_side[sp] = 0
        sp += 1

    return (feature[:count].copy(), threshold[:count].copy(), left[:count].copy(),
            right[:count].copy(), value[:count].copy())


@njit(cache=True)
def predict_leaves(feature, threshold, left, right, X):
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
