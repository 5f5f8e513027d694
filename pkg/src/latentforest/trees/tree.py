"""Histogram-binned regression trees shared by every ensemble in the package."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from latentforest.trees import _backend

MAX_BINS = 256


class Binner:
    """Per-feature bin edges; a value ``x`` falls in bin ``#(edges < x)``.

    When a feature has at most ``max_bins`` distinct values the edges are the
    midpoints between consecutive distinct values, so split search over bins
    is exactly greedy search over midpoint thresholds.  Otherwise edges sit at
    count quantiles of the data.
    """

    def __init__(self, max_bins: int = MAX_BINS):
        if not 2 <= max_bins <= MAX_BINS:
            raise ValueError(f"max_bins must be in [2, {MAX_BINS}], got {max_bins}")
        self.max_bins = max_bins
        self.edges: list[np.ndarray] = []

    def fit(self, X: np.ndarray) -> "Binner":
        X = np.asarray(X, dtype=np.float64)
        self.edges = []
        for col in X.T:
            u = np.unique(col)
            if u.size <= self.max_bins:
                edges = (u[:-1] + u[1:]) / 2.0
            else:
                qs = np.linspace(0.0, 1.0, self.max_bins + 1)[1:-1]
                lower = np.unique(np.quantile(col, qs, method="lower"))
                lower = lower[lower < u[-1]]
                upper = u[np.searchsorted(u, lower, side="right")]
                edges = (lower + upper) / 2.0
            self.edges.append(edges)
        return self

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([e.size + 1 for e in self.edges], dtype=np.int32)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != len(self.edges):
            raise ValueError(f"expected {len(self.edges)} features, got {X.shape[1]}")
        out = np.empty(X.shape, dtype=np.uint8)
        for j, edges in enumerate(self.edges):
            out[:, j] = np.searchsorted(edges, X[:, j], side="left")
        return out

    def threshold(self, feature: int, bin_index: int) -> float:
        return float(self.edges[feature][bin_index])


@dataclass
class TreeParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    min_child_weight: float = 0.0
    max_features: int | None = None
    min_gain: float = 1e-12


@dataclass
class RegressionTree:
    """Axis-aligned binary tree; rows with ``x[feature] <= threshold`` go left.

    Leaves have ``left == right == -1``.  ``value`` holds the Newton leaf value
    (sum of gradients over sum of hessians) for every node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    n_features: int
    params: TreeParams = field(default_factory=TreeParams)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.left[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.left < 0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        X = _as_matrix(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.left[node] >= 0
        while active.any():
            a = node[active]
            go_left = X[rows[active], self.feature[a]] <= self.threshold[a]
            node[active] = np.where(go_left, self.left[a], self.right[a])
            active = self.left[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return pack([self]).predict(_as_matrix(X, self.n_features))

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
            "n_features": self.n_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
            n_samples=np.asarray(d["n_samples"], dtype=np.int64),
            n_features=int(d["n_features"]),
        )


@dataclass
class PackedEnsemble:
    """Trees concatenated into flat arrays for the traversal kernel."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    roots: np.ndarray

    def predict(self, X: np.ndarray, vote: bool = False) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if self.roots.size == 0:
            return np.zeros(X.shape[0])
        return _backend.predict_ensemble(
            X, self.feature, self.threshold, self.left, self.right,
            self.value, self.roots, bool(vote),
        )


def pack(trees: list[RegressionTree]) -> PackedEnsemble:
    if not trees:
        empty_i = np.zeros(0, dtype=np.int32)
        return PackedEnsemble(empty_i, np.zeros(0), empty_i, empty_i, np.zeros(0),
                              np.zeros(0, dtype=np.int64))
    sizes = np.array([t.n_nodes for t in trees])
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)

    def shift(child, off):
        return np.where(child >= 0, child + off, -1)

    return PackedEnsemble(
        feature=np.concatenate([np.maximum(t.feature, 0) for t in trees]).astype(np.int32),
        threshold=np.concatenate([t.threshold for t in trees]),
        left=np.concatenate([shift(t.left, o) for t, o in zip(trees, offsets)]).astype(np.int32),
        right=np.concatenate([shift(t.right, o) for t, o in zip(trees, offsets)]).astype(np.int32),
        value=np.concatenate([t.value for t in trees]),
        roots=offsets,
    )


def grow_tree(
    Xb: np.ndarray,
    binner: Binner,
    grad: np.ndarray,
    hess: np.ndarray,
    rows: np.ndarray,
    params: TreeParams,
    seed: int = 0,
) -> RegressionTree:
    """Grow one tree on pre-binned features.

    ``grad``/``hess`` are per-row first/second order statistics; the leaf
    value is ``sum(grad) / sum(hess)`` and a split's gain is
    ``GL^2/HL + GR^2/HR - G^2/H``.  With ``hess == 1`` and ``grad`` the
    residual this is plain squared-error CART; with 0/1 labels as ``grad`` it
    selects the same splits as binary gini.
    """
    n_features = Xb.shape[1]
    max_features = n_features if params.max_features is None else int(params.max_features)
    max_features = max(1, min(max_features, n_features))
    feature, split_bin, left, right, value, count = _backend.build_tree(
        np.ascontiguousarray(Xb, dtype=np.uint8),
        np.ascontiguousarray(grad, dtype=np.float64),
        np.ascontiguousarray(hess, dtype=np.float64),
        np.asarray(rows, dtype=np.int64),
        binner.n_bins,
        -1 if params.max_depth is None else int(params.max_depth),
        int(params.min_samples_split),
        int(params.min_samples_leaf),
        float(params.min_child_weight),
        max_features,
        int(seed) & ((1 << 64) - 1),
        float(params.min_gain),
    )
    threshold = np.zeros(feature.size)
    internal = np.flatnonzero(left >= 0)
    for node in internal:
        threshold[node] = binner.threshold(int(feature[node]), int(split_bin[node]))
    return RegressionTree(feature, threshold, left, right, value, count, n_features, params)


def _as_matrix(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(f"expected a 2-D array with {n_features} columns, got shape {X.shape}")
    return X
