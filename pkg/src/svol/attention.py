"""QKV attention, multi-head attention and sinusoidal position tables."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@lru_cache(maxsize=64)
def _pe_table(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    i2 = np.arange(0, dim, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i2 / dim)
    pe = np.empty((length, dim))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    pe.setflags(write=False)
    return pe


def positional_encoding(length: int, dim: int) -> Tensor:
    """Fixed sine/cosine table of shape ``(length, dim)``; even columns sin, odd cos."""
    if dim <= 0 or dim % 2:
        raise ConfigError(f"positional encoding needs an even positive width, got {dim}")
    if length <= 0:
        raise ConfigError(f"positional encoding needs a positive length, got {length}")
    return Tensor(_pe_table(length, dim))


@dataclass
class AttentionWeights:
    """Per-head projections stored side by side.

    ``wq``, ``wk``, ``wv`` are ``D x (heads*Dh)``: columns ``h*Dh:(h+1)*Dh`` hold
    head ``h``. ``wo`` is the ``(heads*Dh) x D`` output projection.
    """

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    heads: int

    @property
    def width(self) -> int:
        return self.wq.shape[0]

    @property
    def head_dim(self) -> int:
        return self.wq.shape[1] // self.heads

    def head(self, h: int) -> tuple[Tensor, Tensor, Tensor]:
        s = slice(h * self.head_dim, (h + 1) * self.head_dim)
        return self.wq[:, s], self.wk[:, s], self.wv[:, s]

    def tensors(self) -> dict[str, Tensor]:
        return {"wq": self.wq, "wk": self.wk, "wv": self.wv, "wo": self.wo}

    @classmethod
    def init(cls, width: int, heads: int, rng: np.random.Generator) -> "AttentionWeights":
        if heads <= 0 or width % heads:
            raise ConfigError(f"width {width} is not divisible by {heads} heads")
        bound = 1.0 / math.sqrt(width)

        def u(shape):
            return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)

        return cls(u((width, width)), u((width, width)), u((width, width)), u((width, width)), heads)


def _add_pos(x: Tensor, pos) -> Tensor:
    if pos is None:
        return x
    pos = T.as_tensor(pos)
    if pos.shape[-2:] != x.shape[-2:]:
        raise ShapeError(f"position table {pos.shape} does not match input {x.shape}")
    return x + pos


def qkv_attention(q, k, v, pos_q, pos_k, wq, wk, wv, return_weights: bool = False):
    """Single-head attention ``softmax(Q K^T / sqrt(Dh)) V``.

    ``Q = (q + pos_q) wq``, ``K = (k + pos_k) wk``, ``V = v wv``. ``pos_q`` and
    ``pos_k`` may be ``None``, meaning no encoding.
    """
    q, k, v = T.as_tensor(q), T.as_tensor(k), T.as_tensor(v)
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"keys ({k.shape}) and values ({v.shape}) differ in length")
    Q = _add_pos(q, pos_q) @ wq
    K = _add_pos(k, pos_k) @ wk
    V = v @ wv
    dh = Q.shape[-1]
    A = T.softmax(T.scale(Q, 1.0 / math.sqrt(dh)) @ T.swapaxes(K, -1, -2), axis=-1)
    out = A @ V
    return (out, A) if return_weights else out


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, n, d = x.shape
    return T.swapaxes(x.reshape(*lead, n, heads, d // heads), -2, -3)


def multi_head_attention(q, k, v, pos_q, pos_k, weights: AttentionWeights,
                         return_weights: bool = False):
    """Run every head in parallel, concatenate on channels, project by ``wo``."""
    q, k, v = T.as_tensor(q), T.as_tensor(k), T.as_tensor(v)
    heads = weights.heads
    d = weights.width
    if d % heads:
        raise ConfigError(f"width {d} is not divisible by {heads} heads")
    for name, x in (("q", q), ("k", k), ("v", v)):
        if x.shape[-1] != d:
            raise ShapeError(f"{name} has width {x.shape[-1]}, weights expect {d}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"keys ({k.shape}) and values ({v.shape}) differ in length")
    dh = d // heads
    Q = _split_heads(_add_pos(q, pos_q) @ weights.wq, heads)
    K = _split_heads(_add_pos(k, pos_k) @ weights.wk, heads)
    V = _split_heads(v @ weights.wv, heads)
    A = T.softmax(T.scale(Q, 1.0 / math.sqrt(dh)) @ T.swapaxes(K, -1, -2), axis=-1)
    ctx = T.swapaxes(A @ V, -2, -3)
    *lead, n, _, _ = ctx.shape
    out = ctx.reshape(*lead, n, heads * dh) @ weights.wo
    return (out, A) if return_weights else out
