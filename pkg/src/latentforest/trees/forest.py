"""Bootstrap random forest for binary labels."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from latentforest.trees.tree import Binner, PackedEnsemble, RegressionTree, TreeParams, grow_tree, pack


@dataclass
class ForestParams:
    """Defaults mirror the evaluation settings (gini, sqrt features, bootstrap)."""

    n_estimators: int = 100
    criterion: str = "gini"
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: str | int | None = "sqrt"
    bootstrap: bool = True
    seed: int = 42
    max_bins: int = 256
    n_jobs: int = 1

    def resolve_max_features(self, n_features: int) -> int:
        mf = self.max_features
        if mf is None:
            return n_features
        if mf == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        if mf == "log2":
            return max(1, int(math.log2(n_features)))
        return max(1, min(int(mf), n_features))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RandomForestClassifier:
    trees: list[RegressionTree]
    n_features: int
    params: ForestParams = field(default_factory=ForestParams)
    _packed: PackedEnsemble | None = field(default=None, repr=False, compare=False)

    @property
    def n_estimators(self) -> int:
        return len(self.trees)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Fraction of trees voting for class 1; column 0 is class 0."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        if self._packed is None:
            self._packed = pack(self.trees)
        p1 = self._packed.predict(X, vote=True) / len(self.trees)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X: np.ndarray) -> np.ndarray:
        # ties go to class 0
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"kind": "random_forest", "n_features": self.n_features,
                "params": self.params.to_dict(), "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForestClassifier":
        return cls([RegressionTree.from_dict(t) for t in d["trees"]], int(d["n_features"]),
                   ForestParams(**d["params"]))


def fit_random_forest(X, y, params: ForestParams | None = None, seed: int | None = None
                      ) -> RandomForestClassifier:
    params = params or ForestParams()
    if seed is not None:
        params = ForestParams(**{**params.to_dict(), "seed": seed})
    if params.criterion != "gini":
        raise ValueError(f"unsupported criterion {params.criterion!r}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ValueError("X must be 2-D with one row per label")
    labels = np.unique(y)
    if labels.size != 2 or not set(labels.tolist()) <= {0, 1}:
        raise ValueError("random forest needs both classes 0 and 1 present")
    binner = Binner(params.max_bins).fit(X)
    Xb = binner.transform(X)
    n = X.shape[0]
    # binary gini == squared error on 0/1 targets, so the regression builder is reused
    target = y.astype(np.float64)
    ones = np.ones(n)
    tp = TreeParams(max_depth=params.max_depth, min_samples_split=params.min_samples_split,
                    min_samples_leaf=params.min_samples_leaf,
                    max_features=params.resolve_max_features(X.shape[1]))

    def one_tree(i):
        rng = np.random.default_rng([params.seed, i])
        if params.bootstrap:
            rows = np.sort(rng.integers(0, n, size=n))
        else:
            rows = np.arange(n)
        return grow_tree(Xb, binner, target, ones, rows, tp, seed=int(rng.integers(2**63)))

    if params.n_jobs > 1:
        with ThreadPoolExecutor(params.n_jobs) as pool:
            trees = list(pool.map(one_tree, range(params.n_estimators)))
    else:
        trees = [one_tree(i) for i in range(params.n_estimators)]
    return RandomForestClassifier(trees, X.shape[1], params)
