"""Pure NumPy fallback for the compiled tree kernels.

Every accumulation here runs in the same order as the Cython version
(sequential sums, ``np.bincount`` and ``np.cumsum`` are both left-to-right),
so both backends grow bit-identical trees.
"""

import numpy as np

_MASK = (1 << 64) - 1


class _SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)


def _seq_sum(a):
    if a.size == 0:
        return 0.0
    return float(np.cumsum(a)[-1])


def build_tree(Xb, g, h, idx_in, n_bins, max_depth, min_samples_split,
               min_samples_leaf, min_child_weight, max_features, seed, min_gain):
    idx = np.array(idx_in, dtype=np.int64, copy=True)
    n_features = Xb.shape[1]
    rng = _SplitMix64(seed)
    feature, split_bin, left, right, value, count = [], [], [], [], [], []

    def new_node():
        for arr in (feature, split_bin, left, right):
            arr.append(-1)
        value.append(0.0)
        count.append(0)

    new_node()
    stack = [(0, idx.shape[0], 0, 0)]
    while stack:
        start, end, depth, node = stack.pop()
        rows = idx[start:end]
        n = end - start
        G = _seq_sum(g[rows])
        H = _seq_sum(h[rows])
        count[node] = n
        value[node] = G / H if H > 0.0 else 0.0

        if max_depth >= 0 and depth >= max_depth:
            continue
        if n < min_samples_split or n < 2 * min_samples_leaf:
            continue
        if H < 2.0 * min_child_weight or H <= 0.0:
            continue

        if max_features < n_features:
            # draw features in random order until max_features of them vary
            # within the node; features constant here are skipped uncounted
            perm = list(range(n_features))
            chosen = []
            for i in range(n_features):
                j = i + int(rng.next() % (n_features - i))
                perm[i], perm[j] = perm[j], perm[i]
                f = perm[i]
                if n_bins[f] < 2:
                    continue
                col = Xb[rows, f]
                if col.min() != col.max():
                    chosen.append(f)
                    if len(chosen) == max_features:
                        break
            chosen.sort()
        else:
            chosen = range(n_features)

        parent = G * G / H
        best_gain, best_f, best_b = min_gain, -1, -1
        gr = g[rows]
        hr = h[rows]
        for f in chosen:
            nb = int(n_bins[f])
            if nb < 2:
                continue
            col = Xb[rows, f]
            GL = np.cumsum(np.bincount(col, weights=gr, minlength=nb))[: nb - 1]
            HL = np.cumsum(np.bincount(col, weights=hr, minlength=nb))[: nb - 1]
            cL = np.cumsum(np.bincount(col, minlength=nb))[: nb - 1]
            cR = n - cL
            HR = H - HL
            ok = ((cL >= min_samples_leaf) & (cR >= min_samples_leaf)
                  & (HL >= min_child_weight) & (HR >= min_child_weight)
                  & (HL > 0.0) & (HR > 0.0))
            if not ok.any():
                continue
            GR = G - GL
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = GL * GL / HL + GR * GR / HR - parent
            gain = np.where(ok, gain, -np.inf)
            b = int(np.argmax(gain))
            if gain[b] > best_gain:
                best_gain, best_f, best_b = float(gain[b]), f, b

        if best_f < 0:
            continue

        go_left = Xb[rows, best_f] <= best_b
        n_left = int(go_left.sum())
        idx[start:end] = np.concatenate([rows[go_left], rows[~go_left]])

        lid = len(feature)
        new_node()
        new_node()
        feature[node] = best_f
        split_bin[node] = best_b
        left[node] = lid
        right[node] = lid + 1
        stack.append((start + n_left, end, depth + 1, lid + 1))
        stack.append((start, start + n_left, depth + 1, lid))

    return (np.asarray(feature, dtype=np.int32), np.asarray(split_bin, dtype=np.int32),
            np.asarray(left, dtype=np.int32), np.asarray(right, dtype=np.int32),
            np.asarray(value, dtype=np.float64), np.asarray(count, dtype=np.int64))


def predict_ensemble(X, feature, threshold, left, right, value, roots, vote):
    n = X.shape[0]
    out = np.zeros(n, dtype=np.float64)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, root, dtype=np.int64)
        active = left[node] >= 0
        while active.any():
            a = node[active]
            go_left = X[rows[active], feature[a]] <= threshold[a]
            node[active] = np.where(go_left, left[a], right[a])
            active = left[node] >= 0
        v = value[node]
        out += (v > 0.5).astype(np.float64) if vote else v
    return out
