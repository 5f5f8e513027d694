# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled histogram tree builder and ensemble traversal.

Mirrors :mod:`latentforest.trees._pykernels` operation for operation; the two
must produce bit-identical trees for the same inputs.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, int32_t, int64_t, uint64_t
from libc.stdlib cimport calloc, malloc, free
from libc.string cimport memset

cnp.import_array()


cdef inline uint64_t _splitmix64(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] = state[0] + <uint64_t>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline void _scan(const double* fhist, int lo, int hi,
                       int n, double G, double H, double parent, int min_samples_leaf,
                       double min_child_weight, int f, double* best_gain, int* best_f,
                       int* best_b) noexcept nogil:
    cdef double GL = 0.0, HL = 0.0, GR, HR, gain
    cdef double cL = 0.0, cR
    cdef int b
    # an empty bin repeats the previous bin's sums, so its gain can never beat
    # it under the strict comparison; scanning only occupied bins below the
    # highest one finds the same split
    for b in range(lo, hi):
        if fhist[3 * b + 2] == 0.0:
            continue
        GL = GL + fhist[3 * b]
        HL = HL + fhist[3 * b + 1]
        cL = cL + fhist[3 * b + 2]
        cR = n - cL
        if cL < min_samples_leaf or cR < min_samples_leaf:
            continue
        HR = H - HL
        if HL < min_child_weight or HR < min_child_weight:
            continue
        if HL <= 0.0 or HR <= 0.0:
            continue
        GR = G - GL
        gain = GL * GL / HL + GR * GR / HR - parent
        if gain > best_gain[0]:
            best_gain[0] = gain
            best_f[0] = f
            best_b[0] = b


cdef int _build(
    const uint8_t[:, ::1] Xb,
    const double[::1] g,
    const double[::1] h,
    int64_t[::1] idx,
    const int32_t[::1] n_bins,
    int max_depth,
    int min_samples_split,
    int min_samples_leaf,
    double min_child_weight,
    int max_features,
    uint64_t seed,
    double min_gain,
    int32_t[::1] out_feature,
    int32_t[::1] out_bin,
    int32_t[::1] out_left,
    int32_t[::1] out_right,
    double[::1] out_value,
    int64_t[::1] out_count,
) noexcept nogil:
    cdef Py_ssize_t n_total = idx.shape[0]
    cdef int n_features = Xb.shape[1]
    cdef int cap = <int>out_feature.shape[0]
    cdef int* st_start = <int*>malloc(cap * sizeof(int))
    cdef int* st_end = <int*>malloc(cap * sizeof(int))
    cdef int* st_depth = <int*>malloc(cap * sizeof(int))
    cdef int* st_node = <int*>malloc(cap * sizeof(int))
    cdef int* perm = <int*>malloc(n_features * sizeof(int))
    cdef int* chosen = <int*>malloc(n_features * sizeof(int))
    # interleaved (gradient, hessian, count) per bin, 256 bins per feature
    cdef double* hist = <double*>calloc(n_features * 256 * 3, sizeof(double))
    cdef int* lo_arr = <int*>malloc(n_features * sizeof(int))
    cdef int* hi_arr = <int*>malloc(n_features * sizeof(int))
    cdef double* fhist
    cdef double* cell
    cdef const uint8_t* row
    cdef double gr, hr
    cdef int64_t* tmp = <int64_t*>malloc((n_total + 1) * sizeof(int64_t))
    cdef uint64_t rng = seed
    cdef int top = 0, n_nodes = 1
    cdef int start, end, depth, node, n, i, j, k, f, fi, b, nb, t, lo, hi
    cdef int best_f, best_b, n_left, n_right_written
    cdef double G, H, GL, HL, GR, HR, gain, best_gain, parent
    cdef int64_t cL, cR, r

    st_start[0] = 0
    st_end[0] = <int>n_total
    st_depth[0] = 0
    st_node[0] = 0
    top = 1

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        node = st_node[top]
        n = end - start

        G = 0.0
        H = 0.0
        for i in range(start, end):
            r = idx[i]
            G = G + g[r]
            H = H + h[r]
        out_count[node] = n
        out_left[node] = -1
        out_right[node] = -1
        out_feature[node] = -1
        out_bin[node] = -1
        if H > 0.0:
            out_value[node] = G / H
        else:
            out_value[node] = 0.0

        if max_depth >= 0 and depth >= max_depth:
            continue
        if n < min_samples_split or n < 2 * min_samples_leaf:
            continue
        if H < 2.0 * min_child_weight or H <= 0.0:
            continue

        # draw features in random order until max_features of them vary within
        # the node; features constant here are skipped uncounted
        if max_features < n_features:
            for i in range(n_features):
                perm[i] = i
            k = 0
            for i in range(n_features):
                j = i + <int>(_splitmix64(&rng) % <uint64_t>(n_features - i))
                t = perm[i]
                perm[i] = perm[j]
                perm[j] = t
                f = perm[i]
                if n_bins[f] < 2:
                    continue
                b = Xb[idx[start], f]
                for j in range(start + 1, end):
                    if Xb[idx[j], f] != b:
                        chosen[k] = f
                        k += 1
                        break
                if k == max_features:
                    break
            # insertion sort of the chosen features
            for i in range(1, k):
                t = chosen[i]
                j = i - 1
                while j >= 0 and chosen[j] > t:
                    chosen[j + 1] = chosen[j]
                    j -= 1
                chosen[j + 1] = t
        else:
            k = n_features
            for i in range(k):
                chosen[i] = i

        parent = G * G / H
        best_gain = min_gain
        best_f = -1
        best_b = -1
        # one row-major pass fills every chosen feature's histogram; per-bin
        # summation follows row order, as in the pure-Python twin
        for fi in range(k):
            lo_arr[fi] = 256
            hi_arr[fi] = 0
        for i in range(start, end):
            r = idx[i]
            gr = g[r]
            hr = h[r]
            row = &Xb[r, 0]
            for fi in range(k):
                b = row[chosen[fi]]
                cell = hist + (fi * 256 + b) * 3
                cell[0] = cell[0] + gr
                cell[1] = cell[1] + hr
                cell[2] = cell[2] + 1.0
                if b < lo_arr[fi]:
                    lo_arr[fi] = b
                if b > hi_arr[fi]:
                    hi_arr[fi] = b
        for fi in range(k):
            f = chosen[fi]
            nb = n_bins[f]
            lo = lo_arr[fi]
            hi = hi_arr[fi]
            fhist = hist + fi * 256 * 3
            if nb >= 2:
                _scan(fhist, lo, hi, n, G, H, parent, min_samples_leaf,
                      min_child_weight, f, &best_gain, &best_f, &best_b)
            # leave the buffer zeroed for the next node
            memset(fhist + lo * 3, 0, (hi - lo + 1) * 3 * sizeof(double))

        if best_f < 0:
            continue

        # stable partition: left rows compacted in place, right rows via tmp
        n_left = 0
        n_right_written = 0
        for i in range(start, end):
            r = idx[i]
            if Xb[r, best_f] <= best_b:
                idx[start + n_left] = r
                n_left += 1
            else:
                tmp[n_right_written] = r
                n_right_written += 1
        for i in range(n_right_written):
            idx[start + n_left + i] = tmp[i]

        out_feature[node] = best_f
        out_bin[node] = best_b
        out_left[node] = n_nodes
        out_right[node] = n_nodes + 1
        st_start[top] = start + n_left
        st_end[top] = end
        st_depth[top] = depth + 1
        st_node[top] = n_nodes + 1
        top += 1
        st_start[top] = start
        st_end[top] = start + n_left
        st_depth[top] = depth + 1
        st_node[top] = n_nodes
        top += 1
        n_nodes += 2

    free(st_start)
    free(st_end)
    free(st_depth)
    free(st_node)
    free(perm)
    free(chosen)
    free(hist)
    free(lo_arr)
    free(hi_arr)
    free(tmp)
    return n_nodes


def build_tree(
    const uint8_t[:, ::1] Xb,
    const double[::1] g,
    const double[::1] h,
    cnp.ndarray idx_in,
    const int32_t[::1] n_bins,
    int max_depth,
    int min_samples_split,
    int min_samples_leaf,
    double min_child_weight,
    int max_features,
    unsigned long long seed,
    double min_gain,
):
    """Grow one tree on binned features; returns node arrays."""
    cdef int64_t[::1] idx = np.array(idx_in, dtype=np.int64, copy=True)
    cdef Py_ssize_t n = idx.shape[0]
    cdef int cap = <int>(2 * n + 1)
    feature = np.empty(cap, dtype=np.int32)
    split_bin = np.empty(cap, dtype=np.int32)
    left = np.empty(cap, dtype=np.int32)
    right = np.empty(cap, dtype=np.int32)
    value = np.empty(cap, dtype=np.float64)
    count = np.empty(cap, dtype=np.int64)
    cdef int32_t[::1] fv = feature
    cdef int32_t[::1] bv = split_bin
    cdef int32_t[::1] lv = left
    cdef int32_t[::1] rv = right
    cdef double[::1] vv = value
    cdef int64_t[::1] cv = count
    cdef int n_nodes
    with nogil:
        n_nodes = _build(Xb, g, h, idx, n_bins, max_depth, min_samples_split,
                         min_samples_leaf, min_child_weight, max_features,
                         <uint64_t>seed, min_gain, fv, bv, lv, rv, vv, cv)
    return (feature[:n_nodes].copy(), split_bin[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), count[:n_nodes].copy())


def predict_ensemble(
    const double[:, ::1] X,
    const int32_t[::1] feature,
    const double[::1] threshold,
    const int32_t[::1] left,
    const int32_t[::1] right,
    const double[::1] value,
    const int64_t[::1] roots,
    bint vote,
):
    """Sum (or 0/1 vote count) of leaf values over all trees, per row."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_trees = roots.shape[0]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, t
    cdef int64_t node
    cdef double acc, v
    with nogil:
        for i in range(n):
            acc = 0.0
            for t in range(n_trees):
                node = roots[t]
                while left[node] >= 0:
                    if X[i, feature[node]] <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                v = value[node]
                if vote:
                    if v > 0.5:
                        acc = acc + 1.0
                else:
                    acc = acc + v
            ov[i] = acc
    return out
