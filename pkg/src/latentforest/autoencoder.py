"""Feed-forward autoencoder trained with plain minibatch SGD.

ReLU on hidden layers, identity on the latent and output layers (standardized
features need negative outputs).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 32
    learning_rate: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def default_latent_dim(input_dim: int) -> int:
    """Half the input width rounded up, at least 2 (capped at the input width)."""
    return min(input_dim, max(2, math.ceil(input_dim / 2)))


def default_hidden(input_dim: int, latent_dim: int) -> tuple[int, ...]:
    return (max(2 * latent_dim, input_dim),)


def _glorot(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class MlpAutoencoder:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    n_encoder_layers: int
    loss_history: list[float] = field(default_factory=list)

    @classmethod
    def initialize(cls, input_dim: int, latent_dim: int, hidden: tuple[int, ...] | None = None,
                   seed: int = 0) -> "MlpAutoencoder":
        if not 1 <= latent_dim <= input_dim:
            raise ValueError(f"latent_dim must lie in [1, {input_dim}], got {latent_dim}")
        hidden = default_hidden(input_dim, latent_dim) if hidden is None else tuple(hidden)
        sizes = [input_dim, *hidden, latent_dim, *reversed(hidden), input_dim]
        rng = np.random.default_rng(seed)
        weights = [_glorot(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(b) for b in sizes[1:]]
        return cls(weights, biases, len(hidden) + 1)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def latent_dim(self) -> int:
        return self.weights[self.n_encoder_layers - 1].shape[1]

    @property
    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def _run(self, X, layers, keep=False):
        acts = [X]
        h = X
        last = layers[-1]
        for i in layers:
            z = h @ self.weights[i] + self.biases[i]
            identity = i == last or i == self.n_encoder_layers - 1
            h = z if identity else np.maximum(z, 0.0)
            if keep:
                acts.append(h)
        return (h, acts) if keep else h

    def encode(self, X: np.ndarray) -> np.ndarray:
        X = _check(X, self.input_dim)
        return self._run(X, range(self.n_encoder_layers))

    def decode(self, Z: np.ndarray) -> np.ndarray:
        Z = _check(Z, self.latent_dim)
        return self._run(Z, range(self.n_encoder_layers, len(self.weights)))

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        return self.decode(self.encode(X))

    def loss(self, X: np.ndarray) -> float:
        """Mean over rows of the squared reconstruction error norm."""
        R = self.reconstruct(X) - X
        return float(np.mean(np.sum(R * R, axis=1)))

    def loss_and_grads(self, X: np.ndarray) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        X = _check(X, self.input_dim)
        n_layers = len(self.weights)
        out, acts = self._run(X, range(n_layers), keep=True)
        R = out - X
        loss = float(np.mean(np.sum(R * R, axis=1)))
        delta = 2.0 * R / X.shape[0]
        gW = [None] * n_layers
        gb = [None] * n_layers
        for i in range(n_layers - 1, -1, -1):
            gW[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ self.weights[i].T
                if i - 1 != self.n_encoder_layers - 1:  # previous layer used ReLU
                    delta = delta * (acts[i] > 0.0)
        return loss, gW, gb

    def to_dict(self) -> dict:
        return {
            "kind": "mlp_autoencoder",
            "n_encoder_layers": self.n_encoder_layers,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpAutoencoder":
        return cls([np.asarray(w, dtype=np.float64) for w in d["weights"]],
                   [np.asarray(b, dtype=np.float64) for b in d["biases"]],
                   int(d["n_encoder_layers"]))


def _check(X, width):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != width:
        raise ValueError(f"expected {width} columns, got shape {X.shape}")
    return X


def fit_autoencoder(X: np.ndarray, latent_dim: int | None = None, cfg: TrainConfig | None = None,
                    hidden: tuple[int, ...] | None = None) -> MlpAutoencoder:
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    latent_dim = default_latent_dim(X.shape[1]) if latent_dim is None else latent_dim
    model = MlpAutoencoder.initialize(X.shape[1], latent_dim, hidden, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    n = X.shape[0]
    batch = min(cfg.batch_size, n)
    history = [model.loss(X)]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            rows = order[start:start + batch]
            _, gW, gb = model.loss_and_grads(X[rows])
            for W, g in zip(model.weights, gW):
                W -= cfg.learning_rate * g
            for b, g in zip(model.biases, gb):
                b -= cfg.learning_rate * g
        loss = model.loss(X)
        if not math.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        history.append(loss)
    model.loss_history = history
    return model
