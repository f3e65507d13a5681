"""Single-head scaled dot-product attention over pixel tokens.

Tokens are rows of an ``N×C`` matrix. With a :class:`NeighborhoodSpec` and a
spatial grid, each query attends only to a ``w×w`` neighborhood in the style
of neighborhood attention: the window is clamped to stay inside the image, so
every query sees ``min(w,H)·min(w,W)`` keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import functional as F
from ..tensor import Tensor, broadcast_to, matmul, mul, reshape, scale, take, transpose, tsum
from .module import Module, Rng, fan_in_uniform


@dataclass(frozen=True)
class NeighborhoodSpec:
    window: int = 7

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"neighborhood window must be a positive odd integer, got {self.window}")

    def is_global(self, height: int, width: int) -> bool:
        return self.window >= height and self.window >= width


def neighborhood_index(height: int, width: int, window: int) -> np.ndarray:
    """``N×K`` flat key indices for every query on an ``height×width`` grid."""
    kh, kw = min(window, height), min(window, width)
    r = window // 2
    rows = np.clip(np.arange(height) - r, 0, height - kh)
    cols = np.clip(np.arange(width) - r, 0, width - kw)
    row_idx = rows[:, None] + np.arange(kh)[None, :]  # H×kh
    col_idx = cols[:, None] + np.arange(kw)[None, :]  # W×kw
    flat = row_idx[:, None, :, None] * width + col_idx[None, :, None, :]
    return flat.reshape(height * width, kh * kw)


@dataclass
class AttentionMap:
    """Attention weights; ``index`` is ``None`` for dense (global) attention."""

    weights: np.ndarray
    index: np.ndarray | None = None

    def dense(self) -> np.ndarray:
        if self.index is None:
            return self.weights
        n = self.weights.shape[0]
        full = np.zeros((n, n))
        np.put_along_axis(full, self.index, self.weights, axis=1)
        return full


class AttentionWeights(Module):
    """Projections ``W_q, W_k ∈ R^{C×d}`` and ``W_v ∈ R^{C×d_v}``."""

    def __init__(self, in_features: int, key_features: int, rng: Rng,
                 value_features: int | None = None):
        value_features = key_features if value_features is None else value_features
        self.wq = fan_in_uniform(rng, (in_features, key_features), in_features)
        self.wk = fan_in_uniform(rng, (in_features, key_features), in_features)
        self.wv = fan_in_uniform(rng, (in_features, value_features), in_features)

    @property
    def key_features(self) -> int:
        return self.wq.shape[1]


def _global_attention(q: Tensor, k: Tensor, v: Tensor, inv_sqrt_d: float):
    logits = scale(matmul(q, transpose(k)), inv_sqrt_d)
    attn = F.softmax(logits, axis=1)
    return matmul(attn, v), AttentionMap(attn.data)


def _neighborhood_attention(q: Tensor, k: Tensor, v: Tensor, inv_sqrt_d: float, index: np.ndarray):
    n, d = q.shape
    kk = index.shape[1]
    dv = v.shape[1]
    keys = take(k, index, axis=0)  # N×K×d
    queries = broadcast_to(reshape(q, (n, 1, d)), (n, kk, d))
    logits = scale(tsum(mul(queries, keys), axis=2), inv_sqrt_d)
    attn = F.softmax(logits, axis=1)
    values = take(v, index, axis=0)  # N×K×dv
    mixed = mul(broadcast_to(reshape(attn, (n, kk, 1)), (n, kk, dv)), values)
    return tsum(mixed, axis=1), AttentionMap(attn.data, index)


def cross_attention(
    x: Tensor,
    y: Tensor,
    weights: AttentionWeights,
    spec: NeighborhoodSpec | None = None,
    grid: tuple[int, int] | None = None,
    return_attention: bool = False,
):
    """``softmax(x W_q (y W_k)ᵀ / √d) · y W_v`` with queries from ``x``.

    ``spec=None`` means global attention. A neighborhood spec needs ``grid``
    (the ``H, W`` the tokens were flattened from); when the window covers the
    whole grid the dense path is used.
    """
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError(f"attention expects N×C token matrices, got {x.shape} and {y.shape}")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"attention width mismatch: queries {x.shape[1]}, keys/values {y.shape[1]}")
    if x.shape[1] != weights.wq.shape[0]:
        raise ValueError(
            f"attention width mismatch: tokens have {x.shape[1]} features, projections expect {weights.wq.shape[0]}"
        )
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"attention token count mismatch: {x.shape[0]} vs {y.shape[0]}")
    q = matmul(x, weights.wq)
    k = matmul(y, weights.wk)
    v = matmul(y, weights.wv)
    inv_sqrt_d = 1.0 / math.sqrt(weights.key_features)

    if spec is not None and (grid is None or grid[0] * grid[1] != x.shape[0]):
        raise ValueError(f"neighborhood attention needs a grid matching {x.shape[0]} tokens, got {grid}")
    if spec is None or spec.is_global(*grid):
        out, amap = _global_attention(q, k, v, inv_sqrt_d)
    else:
        index = neighborhood_index(grid[0], grid[1], spec.window)
        out, amap = _neighborhood_attention(q, k, v, inv_sqrt_d, index)
    return (out, amap) if return_attention else out


def self_attention(z: Tensor, weights: AttentionWeights, spec: NeighborhoodSpec | None = None,
                   grid: tuple[int, int] | None = None, return_attention: bool = False):
    return cross_attention(z, z, weights, spec, grid, return_attention)
