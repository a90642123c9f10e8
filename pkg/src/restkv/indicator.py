"""Importance scoring for KV pairs by attention-output reconstruction.

Two routes to the same number: a brute-force oracle that actually deletes a
cache row and re-runs attention, and a closed form that never touches the
cache.  Removing key ``n`` renormalizes the surviving attention weights by
1/(1 - a_n), which collapses the output difference to

    a_n / (1 - a_n) * || out - v_n @ w_o ||

where ``out`` is the full-cache head output.  The first factor amplifies
attention weight nonlinearly; the second measures how badly the remaining
entries fail to stand in for the removed value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .attention import HeadInstance, HeadParams, KvCache, attention_weights, mha_output
from .numerics import as_vector, l2_norm, stable_softmax

__all__ = [
    "ImportanceMatrix",
    "removal_oracle",
    "closed_form_indicator",
    "renormalized_weights",
    "indicator_matrix",
    "group_indicator_matrix",
    "decompose_two_part",
]

# Floor for 1 - a_n when extreme logits push an attention weight to within
# machine epsilon of 1; avoids a spurious Inf.
DENOM_FLOOR = 1e-300


@dataclass(frozen=True)
class ImportanceMatrix:
    """Raw per-(query, key) importance over the observation window.

    ``scores[t, n]`` is the indicator of key ``n`` under the window's t-th
    query; columns are absolute cache positions.  Keys a query cannot see
    (appended after it) score 0.
    """

    scores: np.ndarray
    query_positions: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        positions = np.asarray(self.query_positions, dtype=np.int64)
        if scores.ndim != 2:
            raise ValueError("scores must be 2-D (window x keys)")
        if positions.shape != (scores.shape[0],):
            raise ValueError("one query position per score row required")
        if not np.all(np.isfinite(scores)) or np.any(scores < 0):
            raise ValueError("importance scores must be finite and non-negative")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "query_positions", positions)

    @property
    def window(self) -> int:
        return self.scores.shape[0]

    @property
    def num_keys(self) -> int:
        return self.scores.shape[1]


def _check_removal_args(cache: KvCache, n: int) -> None:
    if len(cache) < 2:
        raise ValueError("removal importance needs a cache with at least 2 entries")
    if not 0 <= n < len(cache):
        raise ValueError(f"key index {n} out of range for cache of length {len(cache)}")


def removal_oracle(q, cache: KvCache, params: HeadParams, n: int) -> float:
    """Ground-truth importance: output error caused by deleting row ``n``.

    Deliberately brute force - rebuilds the cache without the row and reruns
    the full attention computation.  The closed form is checked against this.
    """
    _check_removal_args(cache, n)
    full = mha_output(q, cache, params)
    reduced = mha_output(q, cache.drop(n), params)
    return l2_norm(full - reduced)


def closed_form_indicator(q, cache: KvCache, params: HeadParams, n: int) -> float:
    """Importance of key ``n`` without rebuilding the cache."""
    _check_removal_args(cache, n)
    attn = attention_weights(q, cache)
    out = (attn @ cache.values) @ params.w_o
    gap = l2_norm(out - cache.values[n] @ params.w_o)
    return attn[n] / max(1.0 - attn[n], DENOM_FLOOR) * gap


def renormalized_weights(weights, n: int) -> np.ndarray:
    """Attention row after key ``n`` is removed: survivors divided by 1 - a_n.

    Identical to recomputing softmax over the remaining logits.
    """
    w = as_vector(weights)
    if w.shape[0] < 2:
        raise ValueError("renormalization needs at least 2 weights")
    if not 0 <= n < w.shape[0]:
        raise ValueError(f"index {n} out of range")
    return np.delete(w, n) / max(1.0 - w[n], DENOM_FLOOR)


def indicator_matrix(instance: HeadInstance) -> ImportanceMatrix:
    """Score every cache key under every query of the observation window.

    The value/output-projection product is computed once and reused across
    all keys per query, keeping the dominant cost at
    O(window * cache_len * d_model).  The window is assumed to sit at the
    end of the cache, so query row t sees keys [0, N - S + t].
    """
    cache = instance.cache
    n_keys = len(cache)
    window = instance.queries.shape[0]
    if n_keys < 2:
        raise ValueError("scoring needs a cache with at least 2 entries")
    if window < 1 or window > n_keys:
        raise ValueError("observation window must fit inside the cache")
    vproj = cache.values @ instance.params.w_o
    inv_scale = 1.0 / np.sqrt(cache.d_k)
    scores = kernels.indicator_scores(
        np.ascontiguousarray(instance.queries), cache.keys, vproj, inv_scale
    )
    positions = np.arange(n_keys - window, n_keys, dtype=np.int64)
    return ImportanceMatrix(scores=scores, query_positions=positions)


def group_indicator_matrix(
    params: HeadParams, cache: KvCache, query_windows: Sequence[np.ndarray]
) -> ImportanceMatrix:
    """Grouped-query hook: several query streams sharing one KV head.

    Per-stream importance matrices are averaged entrywise; mean is the
    symmetric default aggregation.
    """
    if not query_windows:
        raise ValueError("at least one query stream is required")
    mats = [
        indicator_matrix(HeadInstance(params=params, cache=cache, queries=qw))
        for qw in query_windows
    ]
    first = mats[0]
    for m in mats[1:]:
        if m.scores.shape != first.scores.shape:
            raise ValueError("all query streams must share the window size")
    mean_scores = np.mean([m.scores for m in mats], axis=0)
    return ImportanceMatrix(scores=mean_scores, query_positions=first.query_positions)


def decompose_two_part(q, cache: KvCache, params: HeadParams, n: int):
    """Split the indicator into its two competing contributions.

    Returns ``(removed_loss, redistribution_gain)``: the amplified
    contribution lost with value ``n``, and the amplified mass the surviving
    entries gain once the weights renormalize.  The L2 norm of their
    difference is exactly the closed-form indicator.
    """
    _check_removal_args(cache, n)
    attn = attention_weights(q, cache)
    amplifier = attn[n] / max(1.0 - attn[n], DENOM_FLOOR)
    vproj_n = cache.values[n] @ params.w_o
    out = (attn @ cache.values) @ params.w_o
    removed_loss = amplifier * vproj_n
    redistribution_gain = amplifier * out
    return removed_loss, redistribution_gain
