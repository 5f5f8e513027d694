"""Gradient-boosted regression and binary classification."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from latentforest.trees.tree import Binner, PackedEnsemble, RegressionTree, TreeParams, grow_tree, pack

_PROB_CLIP = 1e-6


@dataclass
class GbtParams:
    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    min_child_weight: float = 1.0
    subsample: float = 1.0
    seed: int = 0
    max_bins: int = 256

    def tree_params(self) -> TreeParams:
        return TreeParams(max_depth=self.max_depth, min_child_weight=self.min_child_weight)


@dataclass
class GbtRegressor:
    """Additive model ``base_score + learning_rate * sum(tree(x))``."""

    base_score: float
    learning_rate: float
    trees: list[RegressionTree]
    n_features: int
    train_loss: list[float] = field(default_factory=list)
    _packed: PackedEnsemble | None = field(default=None, repr=False, compare=False)

    @property
    def n_estimators(self) -> int:
        return len(self.trees)

    def raw_sum(self, X: np.ndarray) -> np.ndarray:
        if self._packed is None:
            self._packed = pack(self.trees)
        return self._packed.predict(X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return predict_gbt(self, X)

    def to_dict(self) -> dict:
        return {
            "kind": "gbt_regressor",
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbtRegressor":
        return cls(
            base_score=float(d["base_score"]),
            learning_rate=float(d["learning_rate"]),
            trees=[RegressionTree.from_dict(t) for t in d["trees"]],
            n_features=int(d["n_features"]),
        )


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y must have shape ({X.shape[0]},), got {y.shape}")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("X and y must be finite")
    return X, y


def _round_rows(rng, n, subsample):
    if subsample >= 1.0:
        return np.arange(n, dtype=np.int64)
    m = max(1, int(round(subsample * n)))
    return np.sort(rng.choice(n, size=m, replace=False)).astype(np.int64)


def fit_gbt_regressor(
    X: np.ndarray,
    y: np.ndarray,
    params: GbtParams | None = None,
    binner: Binner | None = None,
    Xb: np.ndarray | None = None,
) -> GbtRegressor:
    """Squared-error boosting.  ``binner``/``Xb`` let callers share one binning
    across several regressors fitted on the same inputs."""
    params = params or GbtParams()
    X, y = _check_xy(X, y)
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    if binner is None:
        binner = Binner(params.max_bins).fit(X)
        Xb = binner.transform(X)
    elif Xb is None:
        Xb = binner.transform(X)
    n = X.shape[0]
    rng = np.random.default_rng(params.seed)
    base = float(np.mean(y))
    pred = np.full(n, base)
    ones = np.ones(n)
    tp = params.tree_params()
    trees = []
    history = [float(np.mean((y - pred) ** 2))]
    for _ in range(params.n_estimators):
        rows = _round_rows(rng, n, params.subsample)
        tree = grow_tree(Xb, binner, y - pred, ones, rows, tp, seed=int(rng.integers(2**63)))
        trees.append(tree)
        pred = pred + params.learning_rate * tree.predict(X)
        history.append(float(np.mean((y - pred) ** 2)))
    return GbtRegressor(base, params.learning_rate, trees, X.shape[1], history)


def predict_gbt(m: GbtRegressor, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.n_features:
        raise ValueError(f"expected {m.n_features} features, got shape {X.shape}")
    if not m.trees:
        return np.full(X.shape[0], m.base_score)
    return m.base_score + m.learning_rate * m.raw_sum(X)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log_loss(y, p):
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


@dataclass
class GbtClassifier:
    """Boosted log-odds with a logistic link; labels are ``p > 0.5``."""

    booster: GbtRegressor
    train_loss: list[float] = field(default_factory=list)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return predict_gbt(self.booster, X)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision_function(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"kind": "gbt_classifier", "booster": self.booster.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "GbtClassifier":
        return cls(GbtRegressor.from_dict(d["booster"]))


@dataclass
class GbtClassifierParams:
    """Defaults follow the downstream XGBoost settings used for evaluation."""

    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    subsample: float = 1.0
    min_child_weight: float = 1.0
    seed: int = 42
    max_bins: int = 256

    def to_dict(self) -> dict:
        return asdict(self)


def fit_gbt_classifier(X, y, params: GbtClassifierParams | None = None) -> GbtClassifier:
    """Newton boosting on logistic deviance (gradient ``y - p``, hessian ``p(1-p)``)."""
    params = params or GbtClassifierParams()
    X, y = _check_xy(X, y)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    binner = Binner(params.max_bins).fit(X)
    Xb = binner.transform(X)
    n = X.shape[0]
    rng = np.random.default_rng(params.seed)
    prior = np.clip(y.mean(), _PROB_CLIP, 1 - _PROB_CLIP)
    base = float(np.log(prior / (1 - prior)))
    F = np.full(n, base)
    tp = TreeParams(max_depth=params.max_depth, min_child_weight=params.min_child_weight)
    trees = []
    history = [_log_loss(y, _sigmoid(F))]
    for _ in range(params.n_estimators):
        p = _sigmoid(F)
        rows = _round_rows(rng, n, params.subsample)
        tree = grow_tree(Xb, binner, y - p, p * (1 - p), rows, tp, seed=int(rng.integers(2**63)))
        trees.append(tree)
        F = F + params.learning_rate * tree.predict(X)
        history.append(_log_loss(y, _sigmoid(F)))
    booster = GbtRegressor(base, params.learning_rate, trees, X.shape[1])
    return GbtClassifier(booster, history)
