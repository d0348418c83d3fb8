"""Numba kernels for tree growth, routing, and cohabitant tallies.

Everything here operates on flat arrays; the dataclass wrappers live in
`forest.py` and `errordist.py`. All kernels are deterministic functions of
their inputs: the only randomness in `grow_tree` comes from numba's
Mersenne-Twister state, which is re-seeded from the per-tree seed at the top
of every call, so trees can be fitted in any order or process layout.
"""

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def grow_tree(x, y, seed, mtry, min_node_size):
    """Grow one CART regression tree on a fresh n-draw bootstrap sample.

    Splits minimize weighted squared error over `mtry` candidate features
    (sampled without replacement per node), with thresholds at midpoints
    between consecutive distinct in-bag values. A node becomes a leaf when
    its bootstrap-sample size drops below 2*min_node_size, its responses
    have zero spread, or no candidate split reduces the squared error.

    Ties in split gain resolve to the lowest feature index, then the lowest
    threshold (candidates are scanned in ascending feature order, thresholds
    in ascending value order, and only strict improvements are accepted).

    Returns (split_feature, split_threshold, left_child, right_child,
    node_value, inbag_counts); child/feature entries are -1 at leaves and
    node_value holds the multiplicity-weighted mean response of each node's
    in-bag members.
    """
    n, p = x.shape
    np.random.seed(seed)

    inbag = np.zeros(n, np.int32)
    for _ in range(n):
        inbag[np.random.randint(0, n)] += 1

    members = np.nonzero(inbag > 0)[0]
    m = members.size
    idx = members.astype(np.int64)
    wbuf = inbag[members].astype(np.float64)

    max_nodes = 2 * n + 1
    split_feature = np.full(max_nodes, LEAF, np.int32)
    split_threshold = np.full(max_nodes, np.nan, np.float64)
    left_child = np.full(max_nodes, LEAF, np.int32)
    right_child = np.full(max_nodes, LEAF, np.int32)
    node_value = np.full(max_nodes, np.nan, np.float64)

    stack_node = np.empty(max_nodes, np.int32)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = m
    n_nodes = 1

    pool = np.arange(p)
    cand = np.empty(mtry, np.int64)
    vals = np.empty(m, np.float64)
    tmp_i = np.empty(m, np.int64)
    tmp_w = np.empty(m, np.float64)

    while top >= 0:
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        top -= 1

        wtot = 0.0
        s = 0.0
        ymin = np.inf
        ymax = -np.inf
        for k in range(lo, hi):
            yi = y[idx[k]]
            wtot += wbuf[k]
            s += wbuf[k] * yi
            if yi < ymin:
                ymin = yi
            if yi > ymax:
                ymax = yi
        mean = s / wtot
        node_value[node] = mean

        if wtot < 2.0 * min_node_size or ymin == ymax:
            continue

        # mtry distinct candidate features via partial Fisher-Yates,
        # then ascending order for deterministic tie-breaking
        for j in range(mtry):
            r = j + np.random.randint(0, p - j)
            t = pool[j]
            pool[j] = pool[r]
            pool[r] = t
            cand[j] = pool[j]
        cand[:mtry].sort()

        # centered responses make the score response-shift invariant up to
        # rounding; stot carries the (near-zero) centering residue
        nk = hi - lo
        stot = 0.0
        for k in range(nk):
            stot += wbuf[lo + k] * (y[idx[lo + k]] - mean)
        parent_score = stot * stot / wtot

        best_score = parent_score
        best_f = -1
        best_t = 0.0
        for ci in range(mtry):
            f = cand[ci]
            v = vals[:nk]
            for k in range(nk):
                v[k] = x[idx[lo + k], f]
            order = np.argsort(v, kind="mergesort")
            wl = 0.0
            sl = 0.0
            for k in range(nk - 1):
                o = order[k]
                wl += wbuf[lo + o]
                sl += wbuf[lo + o] * (y[idx[lo + o]] - mean)
                vk = v[o]
                vnext = v[order[k + 1]]
                if vk == vnext:
                    continue
                sr = stot - sl
                score = sl * sl / wl + sr * sr / (wtot - wl)
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_t = 0.5 * (vk + vnext)
        if best_f < 0:
            continue

        # stable partition of idx[lo:hi] around the split
        a = 0
        b = 0
        for k in range(lo, hi):
            i = idx[k]
            if x[i, best_f] <= best_t:
                idx[lo + a] = i
                wbuf[lo + a] = wbuf[k]
                a += 1
            else:
                tmp_i[b] = i
                tmp_w[b] = wbuf[k]
                b += 1
        for k in range(b):
            idx[lo + a + k] = tmp_i[k]
            wbuf[lo + a + k] = tmp_w[k]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        split_feature[node] = best_f
        split_threshold[node] = best_t
        left_child[node] = lid
        right_child[node] = rid
        top += 1
        stack_node[top] = rid
        stack_lo[top] = lo + a
        stack_hi[top] = hi
        top += 1
        stack_node[top] = lid
        stack_lo[top] = lo
        stack_hi[top] = lo + a

    return (
        split_feature[:n_nodes].copy(),
        split_threshold[:n_nodes].copy(),
        left_child[:n_nodes].copy(),
        right_child[:n_nodes].copy(),
        node_value[:n_nodes].copy(),
        inbag,
    )


@njit(cache=True)
def route_one(split_feature, split_threshold, left_child, right_child, xrow):
    """Leaf node index for a single covariate vector (left iff value <= threshold)."""
    node = 0
    while split_feature[node] >= 0:
        if xrow[split_feature[node]] <= split_threshold[node]:
            node = left_child[node]
        else:
            node = right_child[node]
    return node


@njit(cache=True)
def apply_forest(node_offsets, split_feature, split_threshold, left_child,
                 right_child, xmat):
    """Leaf node index (local to each tree) for every (tree, row) pair."""
    n_trees = node_offsets.size - 1
    m = xmat.shape[0]
    out = np.empty((n_trees, m), np.int32)
    for b in range(n_trees):
        base = node_offsets[b]
        for j in range(m):
            node = 0
            while split_feature[base + node] >= 0:
                if xmat[j, split_feature[base + node]] <= split_threshold[base + node]:
                    node = left_child[base + node]
                else:
                    node = right_child[base + node]
            out[b, j] = node
    return out


@njit(cache=True)
def tally_cohabitants(query_leaves, node_offsets, indptr, rows, n_rows):
    """Per-query cohabitation counts against a leaf->row CSR index.

    query_leaves is (n_trees, m) of local leaf ids; the CSR index maps global
    node ids to the training rows attached to that leaf. Returns an (m, n_rows)
    count matrix: entry (j, i) is the number of trees in which row i shares
    the query point's leaf (and is in the index).
    """
    n_trees, m = query_leaves.shape
    counts = np.zeros((m, n_rows), np.int64)
    for j in range(m):
        for b in range(n_trees):
            g = node_offsets[b] + query_leaves[b, j]
            for ptr in range(indptr[g], indptr[g + 1]):
                counts[j, rows[ptr]] += 1
    return counts


@njit(cache=True)
def tally_inbag_weights(query_leaves, node_offsets, indptr, rows, mults,
                        leaf_totals, n_rows):
    """Per-query forest weights built from in-bag leaf shares.

    For each tree, every training row in the query's leaf contributes its
    bootstrap multiplicity divided by the leaf's total multiplicity; the
    result is averaged over trees, so each output row sums to one.
    """
    n_trees, m = query_leaves.shape
    w = np.zeros((m, n_rows), np.float64)
    for j in range(m):
        for b in range(n_trees):
            g = node_offsets[b] + query_leaves[b, j]
            tot = leaf_totals[g]
            for ptr in range(indptr[g], indptr[g + 1]):
                w[j, rows[ptr]] += mults[ptr] / tot
    inv = 1.0 / n_trees
    for j in range(m):
        for i in range(n_rows):
            w[j, i] *= inv
    return w


def warmup():
    """Compile the kernels on a toy problem (cached to disk afterwards)."""
    x = np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [0.2, 0.8]])
    y = np.array([0.0, 1.0, 0.5, 0.2])
    sf, st, lc, rc, nv, ib = grow_tree(x, y, 1, 1, 1)
    offsets = np.array([0, sf.size], np.int64)
    leaves = apply_forest(offsets, sf, st, lc, rc, x)
    route_one(sf, st, lc, rc, x[0])
    indptr = np.zeros(sf.size + 1, np.int64)
    rows = np.zeros(0, np.int64)
    tally_cohabitants(leaves, offsets, indptr, rows, 4)
    tally_inbag_weights(leaves, offsets, indptr, rows,
                        np.zeros(0, np.float64), np.ones(sf.size), 4)
