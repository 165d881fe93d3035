# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled CART builder and tree traversal.

Mirrors ``_tree_py`` operation for operation: same scan order, same
accumulation order, same splitmix64 stream. Any change here must be made
there too; ``tests/test_kernels.py`` compares the two bit for bit.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

DEF GINI = 0
DEF LEAST_SQUARES = 1


cdef inline uint64_t _splitmix_next(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] = state[0] + <uint64_t>0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _score(double G, double H, int criterion) noexcept nogil:
    cdef double a, b, D
    a = (G * G) / H
    if criterion == GINI:
        D = H - G
        b = (D * D) / H
        return a + b
    return a


def build_tree(
    const double[:, ::1] X,
    const double[::1] g,
    const double[::1] h,
    int64_t[::1] rows,
    int64_t[:, ::1] order,
    int criterion,
    int max_depth,
    int min_samples_split,
    int min_samples_leaf,
    int max_features,
    uint64_t seed,
):
    """Grow one tree. ``rows`` and every row of ``order`` are modified in place."""
    cdef Py_ssize_t n_in = rows.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t cap = 2 * n_in + 1
    cdef Py_ssize_t m = max_features if 0 < max_features < d else d

    feature_arr = np.full(cap, -1, dtype=np.int64)
    threshold_arr = np.zeros(cap, dtype=np.float64)
    left_arr = np.full(cap, -1, dtype=np.int64)
    right_arr = np.full(cap, -1, dtype=np.int64)
    g_arr = np.zeros(cap, dtype=np.float64)
    h_arr = np.zeros(cap, dtype=np.float64)
    n_arr = np.zeros(cap, dtype=np.int64)
    start_arr = np.zeros(cap, dtype=np.int64)
    end_arr = np.zeros(cap, dtype=np.int64)
    depth_arr = np.zeros(cap, dtype=np.int64)
    stack_arr = np.zeros(cap, dtype=np.int64)
    perm_arr = np.zeros(d, dtype=np.int64)
    tmp_arr = np.zeros(max(n_in, 1), dtype=np.int64)
    flag_arr = np.zeros(X.shape[0], dtype=np.uint8)

    cdef int64_t[::1] feature = feature_arr
    cdef double[::1] threshold = threshold_arr
    cdef int64_t[::1] left = left_arr
    cdef int64_t[::1] right = right_arr
    cdef double[::1] node_g = g_arr
    cdef double[::1] node_h = h_arr
    cdef int64_t[::1] node_n = n_arr
    cdef int64_t[::1] start = start_arr
    cdef int64_t[::1] end = end_arr
    cdef int64_t[::1] depth = depth_arr
    cdef int64_t[::1] stack = stack_arr
    cdef int64_t[::1] perm = perm_arr
    cdef int64_t[::1] tmp = tmp_arr
    cdef unsigned char[::1] goes_left = flag_arr

    cdef uint64_t rng = seed
    cdef Py_ssize_t n_nodes = 1
    cdef Py_ssize_t top = 0
    cdef Py_ssize_t node, s, e, n, i, j, k, f, fi, r, nl, best_f, best_i, pos
    cdef int64_t swap
    cdef double G, H, GL, HL, GR, HR, parent, best, sc, sl, sr, x_i, x_next, thr
    cdef uint64_t span

    start[0] = 0
    end[0] = n_in
    depth[0] = 0
    stack[0] = 0
    top = 1

    with nogil:
        while top > 0:
            top -= 1
            node = stack[top]
            s = start[node]
            e = end[node]
            n = e - s

            G = 0.0
            H = 0.0
            for i in range(s, e):
                r = rows[i]
                G = G + g[r]
                H = H + h[r]
            node_g[node] = G
            node_h[node] = H
            node_n[node] = n

            if n < min_samples_split or n < 2 * min_samples_leaf or H <= 0.0:
                continue
            if max_depth >= 0 and depth[node] >= max_depth:
                continue
            if criterion == GINI and (G == 0.0 or G == H):
                continue

            parent = _score(G, H, criterion)

            for i in range(d):
                perm[i] = i
            for i in range(m):
                span = <uint64_t>(d - i)
                j = i + <Py_ssize_t>(_splitmix_next(&rng) % span)
                swap = perm[i]
                perm[i] = perm[j]
                perm[j] = swap

            best = -1.0e308
            best_f = -1
            best_i = -1
            for fi in range(m):
                f = perm[fi]
                GL = 0.0
                HL = 0.0
                for i in range(s, e - 1):
                    r = order[f, i]
                    GL = GL + g[r]
                    HL = HL + h[r]
                    x_i = X[r, f]
                    x_next = X[order[f, i + 1], f]
                    if not (x_next > x_i):
                        continue
                    nl = i - s + 1
                    if nl < min_samples_leaf or n - nl < min_samples_leaf:
                        continue
                    GR = G - GL
                    HR = H - HL
                    if not (HL > 0.0 and HR > 0.0):
                        continue
                    sl = _score(GL, HL, criterion)
                    sr = _score(GR, HR, criterion)
                    sc = sl + sr
                    if sc > best:
                        best = sc
                        best_f = f
                        best_i = i

            if best_f < 0 or not (best - parent > 1e-12 * parent):
                continue

            x_i = X[order[best_f, best_i], best_f]
            x_next = X[order[best_f, best_i + 1], best_f]
            thr = (x_i + x_next) * 0.5
            if thr == x_next:
                thr = x_i

            for i in range(s, e):
                r = rows[i]
                goes_left[r] = 1 if X[r, best_f] <= thr else 0

            # stable partition of the row list and of every feature's order
            k = 0
            for i in range(s, e):
                if goes_left[rows[i]]:
                    tmp[k] = rows[i]
                    k += 1
            nl = k
            for i in range(s, e):
                if not goes_left[rows[i]]:
                    tmp[k] = rows[i]
                    k += 1
            for i in range(n):
                rows[s + i] = tmp[i]
            for f in range(d):
                k = 0
                for i in range(s, e):
                    if goes_left[order[f, i]]:
                        tmp[k] = order[f, i]
                        k += 1
                for i in range(s, e):
                    if not goes_left[order[f, i]]:
                        tmp[k] = order[f, i]
                        k += 1
                for i in range(n):
                    order[f, s + i] = tmp[i]

            feature[node] = best_f
            threshold[node] = thr
            pos = n_nodes
            left[node] = pos
            right[node] = pos + 1
            start[pos] = s
            end[pos] = s + nl
            depth[pos] = depth[node] + 1
            start[pos + 1] = s + nl
            end[pos + 1] = e
            depth[pos + 1] = depth[node] + 1
            n_nodes += 2
            stack[top] = pos + 1
            stack[top + 1] = pos
            top += 2

    return (
        feature_arr[:n_nodes].copy(),
        threshold_arr[:n_nodes].copy(),
        left_arr[:n_nodes].copy(),
        right_arr[:n_nodes].copy(),
        g_arr[:n_nodes].copy(),
        h_arr[:n_nodes].copy(),
        n_arr[:n_nodes].copy(),
    )


def apply_tree(
    const double[:, ::1] X,
    const int64_t[::1] feature,
    const double[::1] threshold,
    const int64_t[::1] left,
    const int64_t[::1] right,
):
    """Leaf index reached by every row of ``X``."""
    cdef Py_ssize_t n = X.shape[0]
    out_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    cdef Py_ssize_t i
    cdef int64_t node
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = node
    return out_arr
