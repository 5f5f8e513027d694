"""SMOTE interpolation between minority rows and their nearest minority neighbors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

BLOCK = 100


def neighbor_table(X: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other rows of each row (self excluded)."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n <= k:
        raise ValueError(f"SMOTE needs more than k_neighbors={k} minority rows, got {n}")
    _, idx = cKDTree(X).query(X, k=k + 1)
    idx = np.atleast_2d(idx)
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        row = [j for j in idx[i] if j != i]
        out[i] = row[:k]
    return out


@dataclass
class SmoteSampler:
    X: np.ndarray
    neighbors: np.ndarray
    seed: int = 0

    @property
    def k(self) -> int:
        return self.neighbors.shape[1]

    def draw(self, count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(rows, base index, neighbor index, u); shorter draws are prefixes of longer ones."""
        if count < 0:
            raise ValueError("count must be >= 0")
        base, nb, u = [], [], []
        for b, start in enumerate(range(0, count, BLOCK)):
            m = min(BLOCK, count - start)
            rng = np.random.default_rng([self.seed, b])
            i = rng.integers(0, self.X.shape[0], size=BLOCK)[:m]
            j = rng.integers(0, self.k, size=BLOCK)[:m]
            base.append(i)
            nb.append(self.neighbors[i, j])
            u.append(rng.random(BLOCK)[:m])
        if not base:
            empty = np.zeros(0, dtype=np.int64)
            return np.zeros((0, self.X.shape[1])), empty, empty, np.zeros(0)
        base, nb, u = np.concatenate(base), np.concatenate(nb), np.concatenate(u)
        rows = self.X[base] + u[:, None] * (self.X[nb] - self.X[base])
        return rows, base, nb, u

    def sample(self, count: int) -> np.ndarray:
        return self.draw(count)[0]


def fit_smote(X_min: np.ndarray, k_neighbors: int = 5, seed: int = 0) -> SmoteSampler:
    X_min = np.asarray(X_min, dtype=np.float64)
    if X_min.ndim != 2:
        raise ValueError("minority rows must form a 2-D matrix")
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    return SmoteSampler(X_min, neighbor_table(X_min, k_neighbors), seed)


def smote(X_min: np.ndarray, count: int, k_neighbors: int = 5, seed: int = 0) -> np.ndarray:
    return fit_smote(X_min, k_neighbors, seed).sample(count)
