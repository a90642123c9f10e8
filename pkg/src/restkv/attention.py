"""Per-head KV cache and attention arithmetic.

A head is a set of projection matrices plus an append-only cache of key and
value rows.  A layer is just a list of heads and a model a list of layers;
nothing beyond attention internals (no positional encodings, MLP, residual)
is modeled.  Causality is enforced by construction order: a query only ever
sees cache rows appended at or before its own position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import as_matrix, as_vector, stable_softmax

__all__ = [
    "HeadParams",
    "KvCache",
    "HeadInstance",
    "project_token",
    "attention_weights",
    "mha_output",
    "decode_step",
]


@dataclass(frozen=True)
class HeadParams:
    """Projection matrices of one attention head.

    ``w_q``/``w_k`` map the model dimension to the key dimension, ``w_v`` to
    the value dimension, and ``w_o`` (this head's slice of the output
    projection) maps values back to the model dimension.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w_q", as_matrix(self.w_q))
        object.__setattr__(self, "w_k", as_matrix(self.w_k))
        object.__setattr__(self, "w_v", as_matrix(self.w_v))
        object.__setattr__(self, "w_o", as_matrix(self.w_o))
        if self.w_q.shape != self.w_k.shape:
            raise ValueError("w_q and w_k must share the same shape")
        if self.w_v.shape[0] != self.w_q.shape[0]:
            raise ValueError("w_v input dimension must match w_q")
        if self.w_o.shape[0] != self.w_v.shape[1]:
            raise ValueError("w_o rows must equal the value dimension")

    @property
    def d_model(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_k(self) -> int:
        return self.w_q.shape[1]

    @property
    def d_v(self) -> int:
        return self.w_v.shape[1]


class KvCache:
    """Append-only store of key/value rows for one head.

    Rows are immutable once appended.  Internally over-allocates and doubles
    capacity so decode appends are amortized O(row).
    """

    def __init__(self, d_k: int, d_v: int, capacity: int = 16):
        if d_k < 1 or d_v < 1:
            raise ValueError("key/value dimensions must be positive")
        self._keys = np.empty((max(capacity, 1), d_k))
        self._values = np.empty((max(capacity, 1), d_v))
        self._len = 0

    @classmethod
    def from_arrays(cls, keys, values) -> "KvCache":
        keys = as_matrix(keys)
        values = as_matrix(values)
        if keys.shape[0] != values.shape[0]:
            raise ValueError("keys and values must have the same number of rows")
        cache = cls(keys.shape[1], values.shape[1], capacity=max(keys.shape[0], 1))
        cache._keys[: keys.shape[0]] = keys
        cache._values[: values.shape[0]] = values
        cache._len = keys.shape[0]
        return cache

    def __len__(self) -> int:
        return self._len

    @property
    def d_k(self) -> int:
        return self._keys.shape[1]

    @property
    def d_v(self) -> int:
        return self._values.shape[1]

    @property
    def keys(self) -> np.ndarray:
        """Snapshot view of the filled key rows (do not mutate)."""
        return self._keys[: self._len]

    @property
    def values(self) -> np.ndarray:
        return self._values[: self._len]

    def append(self, k, v) -> None:
        k = np.asarray(k, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if k.shape != (self.d_k,) or v.shape != (self.d_v,):
            raise ValueError("appended key/value row has the wrong dimension")
        if self._len == self._keys.shape[0]:
            self._keys = np.concatenate([self._keys, np.empty_like(self._keys)])
            self._values = np.concatenate([self._values, np.empty_like(self._values)])
        self._keys[self._len] = k
        self._values[self._len] = v
        self._len += 1

    def select(self, indices) -> "KvCache":
        """Compacted copy holding only the given rows (ascending order kept)."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("indices must be 1-D")
        if idx.size and (idx.min() < 0 or idx.max() >= self._len):
            raise ValueError("index out of range")
        return KvCache.from_arrays(self.keys[idx], self.values[idx])

    def drop(self, n: int) -> "KvCache":
        """Copy with row ``n`` removed."""
        if not 0 <= n < self._len:
            raise ValueError(f"row {n} out of range for cache of length {self._len}")
        keep = np.concatenate([np.arange(n), np.arange(n + 1, self._len)])
        return self.select(keep)


@dataclass
class HeadInstance:
    """Frozen scoring arena: head parameters, a cache, and the projected
    query vectors of the trailing observation window."""

    params: HeadParams
    cache: KvCache
    queries: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))

    def __post_init__(self):
        self.queries = as_matrix(self.queries)
        if self.queries.shape[1] != self.params.d_k:
            raise ValueError("query vectors must have the key dimension")


def project_token(x, params: HeadParams):
    """Project one token embedding into its (q, k, v) vectors."""
    x = as_vector(x)
    if x.shape[0] != params.d_model:
        raise ValueError(
            f"token dimension {x.shape[0]} does not match model dimension {params.d_model}"
        )
    return x @ params.w_q, x @ params.w_k, x @ params.w_v


def attention_weights(q, cache: KvCache) -> np.ndarray:
    """Softmax of scaled query-key dot products over the whole cache."""
    q = as_vector(q)
    if len(cache) == 0:
        raise ValueError("attention over an empty cache is undefined")
    if q.shape[0] != cache.d_k:
        raise ValueError("query dimension does not match the cache keys")
    logits = (cache.keys @ q) / math.sqrt(cache.d_k)
    return stable_softmax(logits)


def mha_output(q, cache: KvCache, params: HeadParams) -> np.ndarray:
    """Head output for one query: attention-weighted values through w_o."""
    attn = attention_weights(q, cache)
    return (attn @ cache.values) @ params.w_o


def decode_step(instance: HeadInstance, x_new) -> np.ndarray:
    """Append one token's KV to the cache and return its head output.

    The fresh KV pair participates in its own attention, so the first token
    of an empty cache attends only to itself.
    """
    q, k, v = project_token(x_new, instance.params)
    instance.cache.append(k, v)
    return mha_output(q, instance.cache, instance.params)
