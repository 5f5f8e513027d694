"""Principal component codec with cumulative-variance component selection."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

EIG_CLAMP = -1e-10


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # D x d, orthonormal columns
    eigenvalues: np.ndarray  # retained, descending
    all_eigenvalues: np.ndarray  # full spectrum, descending
    explained_ratio: float

    @property
    def d(self) -> int:
        return self.components.shape[1]

    @property
    def input_dim(self) -> int:
        return self.components.shape[0]

    def project(self, Z: np.ndarray) -> np.ndarray:
        return project(self, Z)

    def reconstruct(self, L: np.ndarray) -> np.ndarray:
        return reconstruct(self, L)

    def to_dict(self) -> dict:
        return {
            "kind": "pca",
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "all_eigenvalues": self.all_eigenvalues.tolist(),
            "explained_ratio": self.explained_ratio,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        return cls(
            mean=np.asarray(d["mean"], dtype=np.float64),
            components=np.asarray(d["components"], dtype=np.float64).reshape(len(d["mean"]), -1),
            eigenvalues=np.asarray(d["eigenvalues"], dtype=np.float64),
            all_eigenvalues=np.asarray(d["all_eigenvalues"], dtype=np.float64),
            explained_ratio=float(d["explained_ratio"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "PcaModel":
        return cls.from_dict(json.loads(text))


def covariance(Z: np.ndarray) -> np.ndarray:
    """Covariance with divisor n."""
    Zc = Z - Z.mean(axis=0)
    return Zc.T @ Zc / Z.shape[0]


def select_dimension(eigenvalues: np.ndarray, variance_target: float) -> int:
    """Smallest d whose leading eigenvalues carry ``variance_target`` of the total."""
    total = eigenvalues.sum()
    if total <= 0.0:
        return 1
    ratio = np.cumsum(eigenvalues) / total
    # 1e-12 slack so a target of 1.0 is reachable despite rounding in the cumsum
    d = int(np.searchsorted(ratio, variance_target - 1e-12, side="left")) + 1
    return min(d, eigenvalues.size)


def fit_pca(Z: np.ndarray, variance_target: float = 0.95) -> PcaModel:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ValueError("PCA needs a 2-D matrix with at least 2 rows")
    if not np.all(np.isfinite(Z)):
        raise ValueError("PCA input contains non-finite entries")
    if not 0.0 < variance_target <= 1.0:
        raise ValueError("variance_target must lie in (0, 1]")
    mean = Z.mean(axis=0)
    C = covariance(Z)
    C = (C + C.T) / 2.0
    w, V = np.linalg.eigh(C)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    w = np.where(w < EIG_CLAMP, w, np.maximum(w, 0.0))
    # sign convention: largest-magnitude entry of each eigenvector is positive
    pivot = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[pivot, np.arange(V.shape[1])])
    d = select_dimension(w, variance_target)
    total = w.sum()
    ratio = float(w[:d].sum() / total) if total > 0 else 1.0
    return PcaModel(mean, V[:, :d].copy(), w[:d].copy(), w, min(ratio, 1.0))


def project(m: PcaModel, Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != m.input_dim:
        raise ValueError(f"expected {m.input_dim} columns, got shape {Z.shape}")
    return (Z - m.mean) @ m.components


def reconstruct(m: PcaModel, L: np.ndarray) -> np.ndarray:
    L = np.asarray(L, dtype=np.float64)
    if L.ndim != 2 or L.shape[1] != m.d:
        raise ValueError(f"expected {m.d} latent columns, got shape {L.shape}")
    return L @ m.components.T + m.mean
