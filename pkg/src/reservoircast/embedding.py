"""Input embedding: reversible instance normalization + windowed cross-attention.

A length-k window ending at time t is mapped to a (k, d_eps) matrix: each row
is an affine token embedding of one observation, then the window attends over
a short neighborhood around t. The matrix named w_k multiplies the window
(query) side and w_q the neighborhood (key) side; that orientation is part of
the contract. At inference the neighborhood is clipped to the past so no
future value can leak into the embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .linalg import Rng

STD_FLOOR = 1e-8


@dataclass
class RevinStats:
    mean: np.ndarray  # (n_features,)
    std: np.ndarray   # (n_features,) population std, floored


def revin_normalize(u: np.ndarray) -> tuple[np.ndarray, RevinStats]:
    """Per-feature zero-mean unit-variance scaling with invertible stats."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] < 1:
        raise ConfigError(f"expected a (T, n_features) series, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ConfigError("series has non-finite entries")
    mean = u.mean(axis=0)
    std = np.maximum(u.std(axis=0), STD_FLOOR)
    constant = np.all(u == u[0:1], axis=0)
    mean[constant] = u[0, constant]  # exact, avoids summation rounding
    std[constant] = STD_FLOOR
    x = (u - mean) / std
    x[:, constant] = 0.0  # constant features map to exact zeros
    return x, RevinStats(mean=mean, std=std)


def revin_apply(u: np.ndarray, stats: RevinStats) -> np.ndarray:
    """Normalize with previously computed stats (e.g. train-split stats)."""
    return (np.asarray(u, dtype=np.float64) - stats.mean) / stats.std


def revin_denormalize(x: np.ndarray, stats: RevinStats) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * stats.std + stats.mean


@dataclass
class EmbeddingConfig:
    n_features: int
    d_eps: int = 32
    window_k: int = 100
    neighbor_i: int = 5

    def validate(self) -> "EmbeddingConfig":
        if self.n_features < 1 or self.d_eps < 1:
            raise ConfigError("n_features and d_eps must be >= 1")
        if self.window_k < 1:
            raise ConfigError("window_k must be >= 1")
        if self.neighbor_i < 0:
            raise ConfigError("neighbor_i must be >= 0")
        return self


def init_embedding(config: EmbeddingConfig, rng: Rng) -> dict:
    """Seeded parameter dict; scale 1/sqrt(fan_in) keeps logits O(1)."""
    config.validate()
    d = config.d_eps
    su = 1.0 / np.sqrt(config.n_features)
    sd = 1.0 / np.sqrt(d)
    return {
        "token_map": rng.uniform(-su, su, (config.n_features, d)),
        "token_bias": np.zeros((1, d)),
        "w_k": rng.uniform(-sd, sd, (d, d)),
        "w_q": rng.uniform(-sd, sd, (d, d)),
        "w_v": rng.uniform(-sd, sd, (d, d)),
    }


def _lift(params: dict) -> dict:
    return {k: (v if isinstance(v, ad.Tensor) else ad.constant(v)) for k, v in params.items()}


def embed_tokens(u_rows, params: dict) -> ad.Tensor:
    """Affine token embedding of raw observations, one row per time step."""
    p = _lift(params)
    rows = u_rows if isinstance(u_rows, ad.Tensor) else ad.constant(np.atleast_2d(u_rows))
    return rows @ p["token_map"] + p["token_bias"]


def cross_attention(window_emb: ad.Tensor, neighbor_emb: ad.Tensor, params: dict) -> ad.Tensor:
    """Window rows attend over the neighborhood: softmax(Q K^T / sqrt(d)) V.

    Q = window_emb @ w_k and K = neighbor_emb @ w_q (the reversed naming is
    deliberate); V = neighbor_emb @ w_v.
    """
    p = _lift(params)
    d = p["w_k"].value.shape[0]
    q = window_emb @ p["w_k"]
    k = neighbor_emb @ p["w_q"]
    v = neighbor_emb @ p["w_v"]
    scores = (q @ k.transpose()) / np.sqrt(float(d))
    return ad.softmax(scores, axis=-1) @ v


def _neighbor_slice(t: int, i: int, total: int, allow_future: bool) -> slice:
    lo = max(0, t - i)
    hi = min(total, t + i + 1) if allow_future else t + 1
    return slice(lo, hi)


def embed_window(u: np.ndarray, t: int, config: EmbeddingConfig, params: dict,
                 allow_future: bool = False) -> ad.Tensor:
    """(k, d_eps) embedding of the window ending at index t.

    Requires t >= k-1. With allow_future=False only u[:t+1] can influence the
    result.
    """
    u = np.asarray(u, dtype=np.float64)
    k = config.window_k
    if t < k - 1:
        raise ConfigError(f"window needs {k} points of history, t={t} is too early")
    if t >= u.shape[0]:
        raise ConfigError(f"t={t} beyond series length {u.shape[0]}")
    window = ad.constant(u[t - k + 1: t + 1])
    neighbors = ad.constant(u[_neighbor_slice(t, config.neighbor_i, u.shape[0], allow_future)])
    return cross_attention(embed_tokens(window, params), embed_tokens(neighbors, params), params)


def embed_query_row(u: np.ndarray, t: int, config: EmbeddingConfig, params: dict) -> np.ndarray:
    """Last row of embed_window(u, t) without building the full window.

    This is the per-step drive signal for the reservoirs; it only touches
    u[t-i : t+1], so it can stream with O(1) history.
    """
    u = np.asarray(u, dtype=np.float64)
    if t >= u.shape[0]:
        raise ConfigError(f"t={t} beyond series length {u.shape[0]}")
    query = ad.constant(u[t: t + 1])
    neighbors = ad.constant(u[_neighbor_slice(t, config.neighbor_i, u.shape[0], False)])
    out = cross_attention(embed_tokens(query, params), embed_tokens(neighbors, params), params)
    return out.value[0]
