"""Transformer autoencoder over feature tokens, with hand-written backprop.

Each original column is one token: numeric columns through a per-feature
linear map, categorical columns through an embedding table.  Sinusoidal
positional encodings mark column position.  The encoder is a stack of
post-norm blocks (multi-head self-attention, add & norm, ReLU feed-forward,
add & norm); the latent is the token mean mapped linearly to ``latent_dim``.
The decoder broadcasts the latent back to one token per column through a
linear map, runs its own (unmasked) blocks, and ends in per-column heads:
linear for numeric columns, softmax over the vocabulary for categorical ones.

Loss per row: squared error over numeric columns plus cross-entropy over
categorical columns, averaged over rows.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from latentforest.autoencoder import TrainingDivergedError

LN_EPS = 1e-8


@dataclass
class AttnConfig:
    embed_dim: int = 8
    nhead: int = 4
    num_layers: int = 2
    dim_ff: int = 64
    latent_dim_factor: float = 0.5
    epochs: int = 1000
    batch_size: int = 32
    learning_rate: float = 0.001
    optimizer: str = "sgd"
    seed: int = 0

    def __post_init__(self):
        if min(self.embed_dim, self.nhead, self.num_layers, self.dim_ff, self.epochs,
               self.batch_size) < 1 or self.learning_rate <= 0 or self.latent_dim_factor <= 0:
            raise ValueError("transformer settings must be positive")
        if self.embed_dim % self.nhead:
            raise ValueError(f"nhead={self.nhead} does not divide embed_dim={self.embed_dim}")
        if self.embed_dim % 2:
            raise ValueError("embed_dim must be even for sinusoidal positional encoding")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")

    def latent_dim(self, n_tokens: int) -> int:
        return max(1, math.ceil(n_tokens * self.latent_dim_factor))

    def to_dict(self) -> dict:
        return asdict(self)


def positional_encoding(n_positions: int, d_model: int) -> np.ndarray:
    if d_model % 2:
        raise ValueError("d_model must be even")
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    two_i = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, two_i / d_model)
    pe = np.zeros((n_positions, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def softmax(S: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(S - S.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def self_attention(Q: np.ndarray, K: np.ndarray, V: np.ndarray, return_weights: bool = False):
    """``softmax(Q K^T / sqrt(d_k)) V`` over the last two axes."""
    Q, K, V = (np.asarray(a, dtype=np.float64) for a in (Q, K, V))
    if Q.shape[-1] != K.shape[-1] or K.shape[-2] != V.shape[-2]:
        raise ValueError(f"non-conformable shapes Q{Q.shape} K{K.shape} V{V.shape}")
    A = softmax(Q @ np.swapaxes(K, -1, -2) / math.sqrt(Q.shape[-1]))
    out = A @ V
    return (out, A) if return_weights else out


@dataclass(frozen=True)
class TokenLayout:
    """Token order and the encoded-matrix columns each token covers."""

    kinds: tuple[str, ...]  # "num" | "cat" per token
    spans: tuple[tuple[int, int], ...]  # encoded column span per token
    width: int

    @classmethod
    def from_schema(cls, schema) -> "TokenLayout":
        kinds, spans, pos = [], [], 0
        for c in schema.columns:
            w = len(c.vocabulary) if c.kind == "categorical" else 1
            kinds.append("cat" if c.kind == "categorical" else "num")
            spans.append((pos, pos + w))
            pos += w
        return cls(tuple(kinds), tuple(spans), pos)

    @classmethod
    def numeric(cls, n: int) -> "TokenLayout":
        return cls(("num",) * n, tuple((i, i + 1) for i in range(n)), n)

    @property
    def n_tokens(self) -> int:
        return len(self.kinds)

    @property
    def num_tokens(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k == "num"]

    @property
    def cat_tokens(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k == "cat"]

    @property
    def num_columns(self) -> list[int]:
        return [self.spans[i][0] for i in self.num_tokens]

    def to_dict(self) -> dict:
        return {"kinds": list(self.kinds), "spans": [list(s) for s in self.spans],
                "width": self.width}

    @classmethod
    def from_dict(cls, d: dict) -> "TokenLayout":
        return cls(tuple(d["kinds"]), tuple(tuple(s) for s in d["spans"]), int(d["width"]))


_BLOCK_PARAMS = ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_g", "ln1_b",
                 "w1", "b1", "w2", "b2", "ln2_g", "ln2_b")


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_back(dy, cache, g):
    xhat, inv = cache
    dxhat = dy * g
    dg = np.sum(dy * xhat, axis=(0, 1))
    db = np.sum(dy, axis=(0, 1))
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True))
    return dx, dg, db


def _flat(a):
    return a.reshape(-1, a.shape[-1])


@dataclass
class TransformerAutoencoder:
    params: dict[str, np.ndarray]
    layout: TokenLayout
    config: AttnConfig
    latent_dim: int
    loss_history: list[float] = field(default_factory=list)

    # -- construction ------------------------------------------------------
    @classmethod
    def initialize(cls, layout: TokenLayout, cfg: AttnConfig | None = None,
                   latent_dim: int | None = None) -> "TransformerAutoencoder":
        cfg = cfg or AttnConfig()
        latent_dim = cfg.latent_dim(layout.n_tokens) if latent_dim is None else latent_dim
        rng = np.random.default_rng(cfg.seed)
        dm, ff, T = cfg.embed_dim, cfg.dim_ff, layout.n_tokens
        n_num = len(layout.num_tokens)

        def glorot(a, b, shape=None):
            lim = math.sqrt(6.0 / (a + b))
            return rng.uniform(-lim, lim, size=shape or (a, b))

        p = {
            "num_w": glorot(1, dm, (n_num, dm)),
            "num_b": np.zeros((n_num, dm)),
        }
        for j, tok in enumerate(layout.cat_tokens):
            a, b = layout.spans[tok]
            p[f"cat_emb{j}"] = rng.normal(0.0, 1.0, size=(b - a, dm))
        for side in ("enc", "dec"):
            for l in range(cfg.num_layers):
                pre = f"{side}{l}."
                for name in ("wq", "wk", "wv", "wo"):
                    p[pre + name] = glorot(dm, dm)
                    p[pre + "b" + name[1]] = np.zeros(dm)
                p[pre + "ln1_g"] = np.ones(dm)
                p[pre + "ln1_b"] = np.zeros(dm)
                p[pre + "w1"] = glorot(dm, ff)
                p[pre + "b1"] = np.zeros(ff)
                p[pre + "w2"] = glorot(ff, dm)
                p[pre + "b2"] = np.zeros(dm)
                p[pre + "ln2_g"] = np.ones(dm)
                p[pre + "ln2_b"] = np.zeros(dm)
        p["pool_w"] = glorot(dm, latent_dim)
        p["pool_b"] = np.zeros(latent_dim)
        p["up_w"] = glorot(latent_dim, T * dm)
        p["up_b"] = np.zeros(T * dm)
        p["head_w"] = glorot(dm, 1, (n_num, dm))
        p["head_b"] = np.zeros(n_num)
        for j, tok in enumerate(layout.cat_tokens):
            a, b = layout.spans[tok]
            p[f"cat_w{j}"] = glorot(dm, b - a)
            p[f"cat_b{j}"] = np.zeros(b - a)
        return cls(p, layout, cfg, latent_dim)

    @property
    def d_model(self) -> int:
        return self.config.embed_dim

    @property
    def pe(self) -> np.ndarray:
        return positional_encoding(self.layout.n_tokens, self.d_model)

    # -- pieces --------------------------------------------------------------
    def _split_input(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.layout.width:
            raise ValueError(f"expected {self.layout.width} columns, got shape {X.shape}")
        x_num = X[:, self.layout.num_columns]
        cat_idx = [np.argmax(X[:, slice(*self.layout.spans[t])], axis=1)
                   for t in self.layout.cat_tokens]
        return x_num, cat_idx

    def tokenize(self, X: np.ndarray, add_position: bool = True) -> np.ndarray:
        """(N, n_tokens, d_model) token embeddings."""
        x_num, cat_idx = self._split_input(X)
        return self._tokens(x_num, cat_idx, add_position)

    def tokens_from_indices(self, x_num: np.ndarray, cat_idx: list[np.ndarray],
                            add_position: bool = True) -> np.ndarray:
        """Tokens from numeric values and per-categorical category indices."""
        x_num = np.asarray(x_num, dtype=np.float64).reshape(-1, len(self.layout.num_tokens))
        if len(cat_idx) != len(self.layout.cat_tokens):
            raise ValueError("one index array per categorical column is required")
        cat_idx = [np.asarray(c, dtype=np.int64) for c in cat_idx]
        for j, tok in enumerate(self.layout.cat_tokens):
            a, b = self.layout.spans[tok]
            if cat_idx[j].size and (cat_idx[j].min() < 0 or cat_idx[j].max() >= b - a):
                raise ValueError(f"unknown category index for token {tok}")
        return self._tokens(x_num, cat_idx, add_position)

    def _tokens(self, x_num, cat_idx, add_position=True):
        p = self.params
        B = x_num.shape[0]
        E = np.zeros((B, self.layout.n_tokens, self.d_model))
        E[:, self.layout.num_tokens, :] = x_num[:, :, None] * p["num_w"][None] + p["num_b"][None]
        for j, tok in enumerate(self.layout.cat_tokens):
            E[:, tok, :] = p[f"cat_emb{j}"][cat_idx[j]]
        if add_position:
            E = E + self.pe[None]
        return E

    def _block(self, x, pre, keep_weights=None):
        p = self.params
        B, T, dm = x.shape
        H = self.config.nhead
        dk = dm // H

        def heads(a):
            return a.reshape(B, T, H, dk).transpose(0, 2, 1, 3)

        q = heads(x @ p[pre + "wq"] + p[pre + "bq"])
        k = heads(x @ p[pre + "wk"] + p[pre + "bk"])
        v = heads(x @ p[pre + "wv"] + p[pre + "bv"])
        A = softmax(q @ k.transpose(0, 1, 3, 2) / math.sqrt(dk))
        if keep_weights is not None:
            keep_weights.append(A)
        O = (A @ v).transpose(0, 2, 1, 3).reshape(B, T, dm)
        r1 = x + O @ p[pre + "wo"] + p[pre + "bo"]
        h1, ln1 = _layer_norm(r1, p[pre + "ln1_g"], p[pre + "ln1_b"])
        f1 = h1 @ p[pre + "w1"] + p[pre + "b1"]
        a1 = np.maximum(f1, 0.0)
        r2 = h1 + a1 @ p[pre + "w2"] + p[pre + "b2"]
        out, ln2 = _layer_norm(r2, p[pre + "ln2_g"], p[pre + "ln2_b"])
        return out, (x, q, k, v, A, O, h1, ln1, f1, a1, ln2)

    def _block_back(self, dout, cache, pre, grads):
        p = self.params
        x, q, k, v, A, O, h1, ln1, f1, a1, ln2 = cache
        B, T, dm = x.shape
        H = self.config.nhead
        dk = dm // H
        dr2, grads[pre + "ln2_g"], grads[pre + "ln2_b"] = _layer_norm_back(dout, ln2, p[pre + "ln2_g"])
        grads[pre + "w2"] = _flat(a1).T @ _flat(dr2)
        grads[pre + "b2"] = dr2.sum(axis=(0, 1))
        df1 = (dr2 @ p[pre + "w2"].T) * (f1 > 0.0)
        grads[pre + "w1"] = _flat(h1).T @ _flat(df1)
        grads[pre + "b1"] = df1.sum(axis=(0, 1))
        dh1 = dr2 + df1 @ p[pre + "w1"].T
        dr1, grads[pre + "ln1_g"], grads[pre + "ln1_b"] = _layer_norm_back(dh1, ln1, p[pre + "ln1_g"])
        grads[pre + "wo"] = _flat(O).T @ _flat(dr1)
        grads[pre + "bo"] = dr1.sum(axis=(0, 1))
        dO = (dr1 @ p[pre + "wo"].T).reshape(B, T, H, dk).transpose(0, 2, 1, 3)
        dA = dO @ v.transpose(0, 1, 3, 2)
        dv = A.transpose(0, 1, 3, 2) @ dO
        dS = A * (dA - np.sum(dA * A, axis=-1, keepdims=True)) / math.sqrt(dk)
        dq = dS @ k
        dkk = dS.transpose(0, 1, 3, 2) @ q

        def merge(a):
            return a.transpose(0, 2, 1, 3).reshape(B, T, dm)

        dx = dr1
        for name, d in (("q", merge(dq)), ("k", merge(dkk)), ("v", merge(dv))):
            grads[pre + "w" + name] = _flat(x).T @ _flat(d)
            grads[pre + "b" + name] = d.sum(axis=(0, 1))
            dx = dx + d @ p[pre + "w" + name].T
        return dx

    def _encode(self, x_num, cat_idx, keep=False, weights=None):
        h = self._tokens(x_num, cat_idx)
        caches = []
        for l in range(self.config.num_layers):
            h, c = self._block(h, f"enc{l}.", weights)
            caches.append(c)
        m = h.mean(axis=1)
        L0 = m @ self.params["pool_w"] + self.params["pool_b"]
        return (L0, (caches, m)) if keep else L0

    def _decode(self, L0, keep=False, weights=None):
        p = self.params
        B = L0.shape[0]
        T, dm = self.layout.n_tokens, self.d_model
        h = (L0 @ p["up_w"] + p["up_b"]).reshape(B, T, dm) + self.pe[None]
        caches = []
        for l in range(self.config.num_layers):
            h, c = self._block(h, f"dec{l}.", weights)
            caches.append(c)
        D = h
        x_num = np.einsum("bnd,nd->bn", D[:, self.layout.num_tokens, :], p["head_w"]) + p["head_b"]
        probs = [softmax(D[:, tok, :] @ p[f"cat_w{j}"] + p[f"cat_b{j}"])
                 for j, tok in enumerate(self.layout.cat_tokens)]
        return (x_num, probs, (caches, D)) if keep else (x_num, probs)

    def _assemble(self, x_num, probs):
        out = np.zeros((x_num.shape[0], self.layout.width))
        out[:, self.layout.num_columns] = x_num
        for j, tok in enumerate(self.layout.cat_tokens):
            out[:, slice(*self.layout.spans[tok])] = probs[j]
        return out

    # -- public --------------------------------------------------------------
    def encode(self, X: np.ndarray) -> np.ndarray:
        x_num, cat_idx = self._split_input(X)
        return self._encode(x_num, cat_idx)

    def decode(self, L0: np.ndarray) -> np.ndarray:
        """Reconstructed rows: numeric columns as values, categorical spans as
        probabilities (argmax them to get one-hot rows)."""
        L0 = np.asarray(L0, dtype=np.float64)
        if L0.ndim != 2 or L0.shape[1] != self.latent_dim:
            raise ValueError(f"expected {self.latent_dim} latent columns, got shape {L0.shape}")
        return self._assemble(*self._decode(L0))

    def attention_weights(self, X: np.ndarray) -> list[np.ndarray]:
        """Attention matrices (B, heads, T, T) of every encoder then decoder block."""
        x_num, cat_idx = self._split_input(X)
        weights = []
        L0 = self._encode(x_num, cat_idx, weights=weights)
        self._decode(L0, weights=weights)
        return weights

    def loss(self, X: np.ndarray) -> float:
        return self.loss_and_grads(X, need_grads=False)[0]

    def loss_and_grads(self, X: np.ndarray, need_grads: bool = True):
        x_num, cat_idx = self._split_input(X)
        B = x_num.shape[0]
        L0, (enc_caches, pooled) = self._encode(x_num, cat_idx, keep=True)
        xr, probs, (dec_caches, D) = self._decode(L0, keep=True)
        R = xr - x_num
        loss = float(np.sum(R * R))
        for j, pr in enumerate(probs):
            loss -= float(np.sum(np.log(np.maximum(pr[np.arange(B), cat_idx[j]], 1e-300))))
        loss /= B
        if not need_grads:
            return loss, None
        p = self.params
        g: dict[str, np.ndarray] = {}
        dD = np.zeros_like(D)
        dxr = 2.0 * R / B
        num_t = self.layout.num_tokens
        g["head_w"] = np.einsum("bn,bnd->nd", dxr, D[:, num_t, :])
        g["head_b"] = dxr.sum(axis=0)
        dD[:, num_t, :] = dxr[:, :, None] * p["head_w"][None]
        for j, tok in enumerate(self.layout.cat_tokens):
            dlog = probs[j].copy()
            dlog[np.arange(B), cat_idx[j]] -= 1.0
            dlog /= B
            g[f"cat_w{j}"] = D[:, tok, :].T @ dlog
            g[f"cat_b{j}"] = dlog.sum(axis=0)
            dD[:, tok, :] += dlog @ p[f"cat_w{j}"].T
        dh = dD
        for l in range(self.config.num_layers - 1, -1, -1):
            dh = self._block_back(dh, dec_caches[l], f"dec{l}.", g)
        du = dh.reshape(B, -1)
        g["up_w"] = L0.T @ du
        g["up_b"] = du.sum(axis=0)
        dL0 = du @ p["up_w"].T
        g["pool_w"] = pooled.T @ dL0
        g["pool_b"] = dL0.sum(axis=0)
        T = self.layout.n_tokens
        dh = np.repeat((dL0 @ p["pool_w"].T)[:, None, :] / T, T, axis=1)
        for l in range(self.config.num_layers - 1, -1, -1):
            dh = self._block_back(dh, enc_caches[l], f"enc{l}.", g)
        dE = dh
        g["num_w"] = np.einsum("bn,bnd->nd", x_num, dE[:, num_t, :])
        g["num_b"] = dE[:, num_t, :].sum(axis=0)
        for j, tok in enumerate(self.layout.cat_tokens):
            table = np.zeros_like(p[f"cat_emb{j}"])
            np.add.at(table, cat_idx[j], dE[:, tok, :])
            g[f"cat_emb{j}"] = table
        return loss, g

    def to_dict(self) -> dict:
        return {
            "kind": "transformer_autoencoder",
            "layout": self.layout.to_dict(),
            "config": self.config.to_dict(),
            "latent_dim": self.latent_dim,
            "params": {k: v.tolist() for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformerAutoencoder":
        params = {k: np.asarray(v, dtype=np.float64) for k, v in d["params"].items()}
        return cls(params, TokenLayout.from_dict(d["layout"]), AttnConfig(**d["config"]),
                   int(d["latent_dim"]))


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def fit_transformer_ae(X: np.ndarray, layout: TokenLayout, cfg: AttnConfig | None = None
                       ) -> TransformerAutoencoder:
    cfg = cfg or AttnConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    model = TransformerAutoencoder.initialize(layout, cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    n = X.shape[0]
    batch = min(cfg.batch_size, n)
    adam = _Adam(model.params, cfg.learning_rate) if cfg.optimizer == "adam" else None
    history = [model.loss(X)]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            _, grads = model.loss_and_grads(X[order[start:start + batch]])
            if adam is not None:
                adam.step(model.params, grads)
            else:
                for k, gk in grads.items():
                    model.params[k] -= cfg.learning_rate * gk
        loss = model.loss(X)
        if not math.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        history.append(loss)
    model.loss_history = history
    return model
