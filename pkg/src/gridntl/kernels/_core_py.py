"""Pure-Python/NumPy kernel backend.

Reference implementation of the hot kernels: decision-tree growth for the
random forest and exact nearest-neighbor search. The compiled backend in
``_core_cy.pyx`` mirrors this module operation for operation; both must
produce bit-identical outputs, which the test suite asserts. Keep any
change here in lockstep with the .pyx file.

Determinism rules shared by the two backends:

* all in-tree randomness comes from a splitmix64 stream seeded per tree,
  consumed in a fixed order (bootstrap draws first, then one partial
  Fisher-Yates shuffle per internal node, nodes visited depth-first
  left-first);
* split scores are computed from exact integer label counts with the same
  float64 expression, so candidate comparisons agree bitwise;
* equal-score candidates resolve to the lowest feature index, then the
  lowest threshold;
* neighbor ordering is by (distance, training-row index) ascending, with
  distances accumulated feature-by-feature left to right.
"""

from __future__ import annotations

import numpy as np

from ..rng import SplitMix64

BACKEND_NAME = "python"

METRIC_EUCLIDEAN = 0
METRIC_MANHATTAN = 1
METRIC_COSINE = 2


def splitmix64_stream(seed: int, count: int) -> np.ndarray:
    """First `count` outputs of the splitmix64 stream, for backend parity tests."""
    rng = SplitMix64(seed)
    out = np.empty(count, dtype=np.uint64)
    for i in range(count):
        out[i] = rng.next()
    return out


def grow_tree(X, y, seed, max_features, bootstrap_count):
    """Grow one classification tree on a bootstrap sample of (X, y).

    X is float64 C-contiguous (n, d); y is int64 with values in {0, 1}.
    Splits minimize weighted Gini impurity (equivalently maximize the
    summed per-child squared-count score); nodes stop at purity, single
    rows, or when every drawn candidate feature is constant. Returns flat
    node arrays (feature, threshold, left, right, value); feature == -1
    marks a leaf and value is the positive-label fraction at the node.
    """
    n, d = X.shape
    rng = SplitMix64(seed)
    nb = int(bootstrap_count)
    idx = np.empty(nb, dtype=np.int64)
    for i in range(nb):
        idx[i] = rng.next_below(n)

    cap = 2 * nb
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float64)

    k = int(max_features) if max_features < d else d
    n_nodes = 1
    stack = [(0, nb, 0)]
    while stack:
        start, end, node = stack.pop()
        m = end - start
        sub = idx[start:end]
        ysub = y[sub]
        pos = int(ysub.sum())
        value[node] = pos / m
        if m < 2 or pos == 0 or pos == m:
            continue

        # Partial Fisher-Yates draw of k feature indices, then ascending
        # order so the strict-improvement scan breaks ties toward the
        # lowest feature index.
        arr = list(range(d))
        for j in range(k):
            r = j + rng.next_below(d - j)
            arr[j], arr[r] = arr[r], arr[j]
        subset = sorted(arr[:k])

        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        for f in subset:
            v = X[sub, f]
            order = np.argsort(v, kind="stable")
            sv = v[order]
            sy = ysub[order]
            cand = np.nonzero(sv[:-1] < sv[1:])[0]
            if cand.size == 0:
                continue
            prefix = np.cumsum(sy)
            n_left = cand + 1
            pos_left = prefix[cand]
            neg_left = n_left - pos_left
            n_right = m - n_left
            pos_right = pos - pos_left
            neg_right = n_right - pos_right
            score = (pos_left * pos_left + neg_left * neg_left) / n_left + (
                pos_right * pos_right + neg_right * neg_right
            ) / n_right
            j = int(np.argmax(score))
            s = float(score[j])
            if s > best_score:
                best_score = s
                best_f = f
                i = int(cand[j])
                lo = float(sv[i])
                hi = float(sv[i + 1])
                thr = 0.5 * (lo + hi)
                if thr >= hi:
                    thr = lo
                best_thr = thr

        if best_f < 0:
            continue

        v = X[sub, best_f]
        mask = v <= best_thr
        n_left = int(np.count_nonzero(mask))
        idx[start:end] = np.concatenate([sub[mask], sub[~mask]])
        feature[node] = best_f
        threshold[node] = best_thr
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack.append((start + n_left, end, rid))
        stack.append((start, start + n_left, lid))

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


def tree_apply(feature, threshold, left, right, value, X):
    """Leaf value (positive fraction) for every row of X."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.float64)
    for r in range(n):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


def knn_neighbors(train, query, k, metric):
    """Indices of the k nearest training rows for every query row.

    Exact brute-force search. Rows come back ordered by (distance,
    training index) ascending; euclidean uses squared distance, which
    preserves the ordering.
    """
    nt, d = train.shape
    nq = query.shape[0]

    if metric == METRIC_COSINE:
        dot = np.zeros((nq, nt), dtype=np.float64)
        qn = np.zeros(nq, dtype=np.float64)
        tn = np.zeros(nt, dtype=np.float64)
        for j in range(d):
            qj = query[:, j]
            tj = train[:, j]
            dot += qj[:, None] * tj[None, :]
            qn += qj * qj
            tn += tj * tj
        denom = np.sqrt(qn)[:, None] * np.sqrt(tn)[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = 1.0 - dot / denom
        qz = qn == 0.0
        tz = tn == 0.0
        dist[qz[:, None] | tz[None, :]] = 1.0
        dist[qz[:, None] & tz[None, :]] = 0.0
    else:
        dist = np.zeros((nq, nt), dtype=np.float64)
        for j in range(d):
            diff = query[:, j][:, None] - train[:, j][None, :]
            if metric == METRIC_EUCLIDEAN:
                dist += diff * diff
            else:
                dist += np.abs(diff)

    order = np.argsort(dist, axis=1, kind="stable")
    return order[:, :k].astype(np.int64)
