# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Mirrors ``_core_py`` operation for operation; both backends must produce
bit-identical outputs. See the module docstring there for the shared
determinism rules. The heavy loops run with the GIL released so callers
can parallelize over trees or query chunks with plain threads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, sqrt
from libc.stdlib cimport free, malloc, qsort

BACKEND_NAME = "cython"

cdef enum:
    _EUCLIDEAN = 0
    _MANHATTAN = 1
    _COSINE = 2

METRIC_EUCLIDEAN = _EUCLIDEAN
METRIC_MANHATTAN = _MANHATTAN
METRIC_COSINE = _COSINE

ctypedef unsigned long long u64


cdef inline u64 _mix64(u64 z) noexcept nogil:
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline u64 _sm_next(u64* state) noexcept nogil:
    state[0] = state[0] + <u64>0x9E3779B97F4A7C15
    return _mix64(state[0])


cdef struct VPair:
    double v
    long long y


cdef int _cmp_vpair(const void* a, const void* b) noexcept nogil:
    cdef double av = (<const VPair*> a).v
    cdef double bv = (<const VPair*> b).v
    if av < bv:
        return -1
    if av > bv:
        return 1
    return 0


cdef struct DPair:
    double dist
    long long idx


cdef int _cmp_dpair(const void* a, const void* b) noexcept nogil:
    cdef const DPair* pa = <const DPair*> a
    cdef const DPair* pb = <const DPair*> b
    if pa.dist < pb.dist:
        return -1
    if pa.dist > pb.dist:
        return 1
    if pa.idx < pb.idx:
        return -1
    if pa.idx > pb.idx:
        return 1
    return 0


def splitmix64_stream(seed, Py_ssize_t count):
    """First `count` outputs of the splitmix64 stream, for backend parity tests."""
    cdef u64 state = <u64> seed
    out = np.empty(count, dtype=np.uint64)
    cdef u64[::1] o = out
    cdef Py_ssize_t i
    for i in range(count):
        o[i] = _sm_next(&state)
    return out


def grow_tree(double[:, ::1] X, long long[::1] y, seed,
              Py_ssize_t max_features, Py_ssize_t bootstrap_count):
    """Grow one classification tree; see _core_py.grow_tree for the contract."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef u64 state = <u64> seed
    cdef Py_ssize_t nb = bootstrap_count
    cdef Py_ssize_t cap = 2 * nb
    cdef Py_ssize_t k = max_features if max_features < d else d

    idx_arr = np.empty(nb, dtype=np.int64)
    feature_arr = np.full(cap, -1, dtype=np.int32)
    threshold_arr = np.zeros(cap, dtype=np.float64)
    left_arr = np.full(cap, -1, dtype=np.int32)
    right_arr = np.full(cap, -1, dtype=np.int32)
    value_arr = np.zeros(cap, dtype=np.float64)
    stack_arr = np.empty((cap + 2, 3), dtype=np.int64)

    cdef long long[::1] idx = idx_arr
    cdef int[::1] feature = feature_arr
    cdef double[::1] threshold = threshold_arr
    cdef int[::1] left = left_arr
    cdef int[::1] right = right_arr
    cdef double[::1] value = value_arr
    cdef long long[:, ::1] stack = stack_arr

    cdef VPair* pairs = <VPair*> malloc(nb * sizeof(VPair)) if nb > 0 else NULL
    cdef long long* arr = <long long*> malloc(d * sizeof(long long))
    if (nb > 0 and pairs == NULL) or arr == NULL:
        if pairs != NULL:
            free(pairs)
        if arr != NULL:
            free(arr)
        raise MemoryError()

    cdef Py_ssize_t n_nodes = 1
    cdef Py_ssize_t sp, start, end, node, m, i, j, jj, r, n_left
    cdef Py_ssize_t lid, rid
    cdef long long pos, run, tmp, f, best_f
    cdef long long pos_l, neg_l, pos_r, neg_r, nl, nr
    cdef double best_score, best_thr, score, lo, hi, thr

    with nogil:
        for i in range(nb):
            idx[i] = <long long> (_sm_next(&state) % <u64> n)

        sp = 0
        stack[sp, 0] = 0
        stack[sp, 1] = nb
        stack[sp, 2] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            start = <Py_ssize_t> stack[sp, 0]
            end = <Py_ssize_t> stack[sp, 1]
            node = <Py_ssize_t> stack[sp, 2]
            m = end - start
            pos = 0
            for i in range(start, end):
                pos += y[idx[i]]
            value[node] = <double> pos / <double> m
            if m < 2 or pos == 0 or pos == m:
                continue

            for j in range(d):
                arr[j] = j
            for j in range(k):
                r = j + <Py_ssize_t> (_sm_next(&state) % <u64> (d - j))
                tmp = arr[j]
                arr[j] = arr[r]
                arr[r] = tmp
            # insertion sort of the drawn subset, ascending feature index
            for j in range(1, k):
                tmp = arr[j]
                i = j - 1
                while i >= 0 and arr[i] > tmp:
                    arr[i + 1] = arr[i]
                    i -= 1
                arr[i + 1] = tmp

            best_score = -INFINITY
            best_f = -1
            best_thr = 0.0
            for jj in range(k):
                f = arr[jj]
                for i in range(m):
                    pairs[i].v = X[idx[start + i], f]
                    pairs[i].y = y[idx[start + i]]
                qsort(pairs, m, sizeof(VPair), _cmp_vpair)
                run = 0
                for i in range(m - 1):
                    run += pairs[i].y
                    if pairs[i].v < pairs[i + 1].v:
                        nl = i + 1
                        pos_l = run
                        neg_l = nl - pos_l
                        nr = m - nl
                        pos_r = pos - pos_l
                        neg_r = nr - pos_r
                        score = (<double> (pos_l * pos_l + neg_l * neg_l) / <double> nl
                                 + <double> (pos_r * pos_r + neg_r * neg_r) / <double> nr)
                        if score > best_score:
                            best_score = score
                            best_f = f
                            lo = pairs[i].v
                            hi = pairs[i + 1].v
                            thr = 0.5 * (lo + hi)
                            if thr >= hi:
                                thr = lo
                            best_thr = thr

            if best_f < 0:
                continue

            i = start
            j = end - 1
            while i <= j:
                if X[idx[i], best_f] <= best_thr:
                    i += 1
                else:
                    tmp = idx[i]
                    idx[i] = idx[j]
                    idx[j] = tmp
                    j -= 1
            n_left = i - start

            feature[node] = <int> best_f
            threshold[node] = best_thr
            lid = n_nodes
            rid = n_nodes + 1
            n_nodes += 2
            left[node] = <int> lid
            right[node] = <int> rid
            stack[sp, 0] = start + n_left
            stack[sp, 1] = end
            stack[sp, 2] = rid
            sp += 1
            stack[sp, 0] = start
            stack[sp, 1] = start + n_left
            stack[sp, 2] = lid
            sp += 1

    if pairs != NULL:
        free(pairs)
    free(arr)
    return (
        feature_arr[:n_nodes].copy(),
        threshold_arr[:n_nodes].copy(),
        left_arr[:n_nodes].copy(),
        right_arr[:n_nodes].copy(),
        value_arr[:n_nodes].copy(),
    )


def tree_apply(int[::1] feature, double[::1] threshold, int[::1] left,
               int[::1] right, double[::1] value, double[:, ::1] X):
    """Leaf value (positive fraction) for every row of X."""
    cdef Py_ssize_t n = X.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t r
    cdef int node
    with nogil:
        for r in range(n):
            node = 0
            while feature[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            o[r] = value[node]
    return out


def knn_neighbors(double[:, ::1] train, double[:, ::1] query, Py_ssize_t k, int metric):
    """Indices of the k nearest training rows per query row; see _core_py."""
    cdef Py_ssize_t nt = train.shape[0]
    cdef Py_ssize_t d = train.shape[1]
    cdef Py_ssize_t nq = query.shape[0]

    out = np.empty((nq, k), dtype=np.int64)
    cdef long long[:, ::1] o = out

    cdef DPair* pairs = <DPair*> malloc(nt * sizeof(DPair))
    cdef double* tn = NULL
    if pairs == NULL:
        raise MemoryError()
    if metric == _COSINE:
        tn = <double*> malloc(nt * sizeof(double))
        if tn == NULL:
            free(pairs)
            raise MemoryError()

    cdef Py_ssize_t q, t, j, i
    cdef double acc, diff, qn, dotv, denom

    with nogil:
        if metric == _COSINE:
            for t in range(nt):
                acc = 0.0
                for j in range(d):
                    acc += train[t, j] * train[t, j]
                tn[t] = acc

        for q in range(nq):
            if metric == _COSINE:
                qn = 0.0
                for j in range(d):
                    qn += query[q, j] * query[q, j]
                for t in range(nt):
                    dotv = 0.0
                    for j in range(d):
                        dotv += query[q, j] * train[t, j]
                    if qn == 0.0 and tn[t] == 0.0:
                        pairs[t].dist = 0.0
                    elif qn == 0.0 or tn[t] == 0.0:
                        pairs[t].dist = 1.0
                    else:
                        denom = sqrt(qn) * sqrt(tn[t])
                        pairs[t].dist = 1.0 - dotv / denom
                    pairs[t].idx = t
            elif metric == _EUCLIDEAN:
                for t in range(nt):
                    acc = 0.0
                    for j in range(d):
                        diff = query[q, j] - train[t, j]
                        acc += diff * diff
                    pairs[t].dist = acc
                    pairs[t].idx = t
            else:
                for t in range(nt):
                    acc = 0.0
                    for j in range(d):
                        acc += fabs(query[q, j] - train[t, j])
                    pairs[t].dist = acc
                    pairs[t].idx = t

            qsort(pairs, nt, sizeof(DPair), _cmp_dpair)
            for i in range(k):
                o[q, i] = pairs[i].idx

    free(pairs)
    if tn != NULL:
        free(tn)
    return out
