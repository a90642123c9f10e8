"""Pure-numpy implementations of the hot kernels.

Used as the fallback when numba is unavailable or when
``RESTKV_BACKEND=numpy`` is set.  Semantics match
:mod:`restkv.kernels.numba_backend` to within float64 rounding.
"""

from __future__ import annotations

import numpy as np

# Guard for attention weights pushed to 1.0 by extreme logits: keeps the
# amplifier a/(1-a) finite without distorting realistic inputs.
DENOM_FLOOR = 1e-300


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def causal_attention(queries: np.ndarray, keys: np.ndarray, inv_scale: float) -> np.ndarray:
    """Attention weights of a trailing query window over a cache.

    Row ``t`` holds softmax(q_t . K[:limit]^T * inv_scale) where
    ``limit = N - S + t + 1``; columns past the limit are zero.  The window
    occupies the last S positions of the cache, so each query attends to
    every key up to and including its own.
    """
    S, _ = queries.shape
    N = keys.shape[0]
    out = np.zeros((S, N))
    base = N - S
    for t in range(S):
        limit = base + t + 1
        logits = (keys[:limit] @ queries[t]) * inv_scale
        out[t, :limit] = _softmax(logits)
    return out


def indicator_scores(
    queries: np.ndarray,
    keys: np.ndarray,
    vproj: np.ndarray,
    inv_scale: float,
) -> np.ndarray:
    """Closed-form reconstruction importance for every (window query, key).

    ``vproj`` is the precomputed product of the value cache with the output
    projection, reused across all keys for each query.  Entry (t, n) is
    a/(1-a) * ||out_t - vproj[n]|| with a the attention weight of query t on
    key n; keys the query cannot see are scored 0.
    """
    S, _ = queries.shape
    N = keys.shape[0]
    scores = np.zeros((S, N))
    base = N - S
    for t in range(S):
        limit = base + t + 1
        attn = _softmax((keys[:limit] @ queries[t]) * inv_scale)
        out_t = attn @ vproj[:limit]
        diff = vproj[:limit] - out_t
        norms = np.sqrt(np.einsum("nd,nd->n", diff, diff))
        scores[t, :limit] = attn / np.maximum(1.0 - attn, DENOM_FLOOR) * norms
    return scores


def decode_outputs(
    keys0: np.ndarray,
    vproj0: np.ndarray,
    q_new: np.ndarray,
    k_new: np.ndarray,
    vproj_new: np.ndarray,
    inv_scale: float,
) -> np.ndarray:
    """Head outputs (post output-projection) for a teacher-forced decode.

    Starting from a cache of ``keys0``/``vproj0``, step m appends the m-th
    new KV pair and attends over everything appended so far plus the
    initial cache.  Returns one output row per decode step.
    """
    M = q_new.shape[0]
    N0 = keys0.shape[0]
    dm = vproj0.shape[1]
    keys = np.concatenate([keys0, k_new], axis=0)
    vproj = np.concatenate([vproj0, vproj_new], axis=0)
    out = np.empty((M, dm))
    for m in range(M):
        limit = N0 + m + 1
        attn = _softmax((keys[:limit] @ q_new[m]) * inv_scale)
        out[m] = attn @ vproj[:limit]
    return out
