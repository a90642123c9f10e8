"""Numba-jitted implementations of the hot kernels.

Same contracts as :mod:`restkv.kernels.numpy_backend`.  ``cache=True`` so
the compiled artifacts persist across processes; no fastmath, the scoring
math must stay bit-reproducible within a backend.
"""

from __future__ import annotations

import numpy as np
from numba import njit

DENOM_FLOOR = 1e-300


@njit(cache=True)
def _softmax_into(logits, limit, out):
    m = logits[0]
    for i in range(1, limit):
        if logits[i] > m:
            m = logits[i]
    s = 0.0
    for i in range(limit):
        e = np.exp(logits[i] - m)
        out[i] = e
        s += e
    for i in range(limit):
        out[i] /= s


@njit(cache=True)
def causal_attention(queries, keys, inv_scale):
    S, dk = queries.shape
    N = keys.shape[0]
    out = np.zeros((S, N))
    logits = np.empty(N)
    base = N - S
    for t in range(S):
        limit = base + t + 1
        for n in range(limit):
            acc = 0.0
            for d in range(dk):
                acc += keys[n, d] * queries[t, d]
            logits[n] = acc * inv_scale
        _softmax_into(logits, limit, out[t])
    return out


@njit(cache=True)
def indicator_scores(queries, keys, vproj, inv_scale):
    S, dk = queries.shape
    N = keys.shape[0]
    dm = vproj.shape[1]
    scores = np.zeros((S, N))
    logits = np.empty(N)
    attn = np.empty(N)
    out_t = np.empty(dm)
    base = N - S
    for t in range(S):
        limit = base + t + 1
        for n in range(limit):
            acc = 0.0
            for d in range(dk):
                acc += keys[n, d] * queries[t, d]
            logits[n] = acc * inv_scale
        _softmax_into(logits, limit, attn)
        for d in range(dm):
            out_t[d] = 0.0
        for n in range(limit):
            a = attn[n]
            for d in range(dm):
                out_t[d] += a * vproj[n, d]
        for n in range(limit):
            sq = 0.0
            for d in range(dm):
                diff = vproj[n, d] - out_t[d]
                sq += diff * diff
            denom = 1.0 - attn[n]
            if denom < DENOM_FLOOR:
                denom = DENOM_FLOOR
            scores[t, n] = attn[n] / denom * np.sqrt(sq)
    return scores


@njit(cache=True)
def decode_outputs(keys0, vproj0, q_new, k_new, vproj_new, inv_scale):
    M, dk = q_new.shape
    N0 = keys0.shape[0]
    dm = vproj0.shape[1]
    N = N0 + M
    keys = np.empty((N, dk))
    vproj = np.empty((N, dm))
    keys[:N0] = keys0
    keys[N0:] = k_new
    vproj[:N0] = vproj0
    vproj[N0:] = vproj_new
    out = np.zeros((M, dm))
    logits = np.empty(N)
    attn = np.empty(N)
    for m in range(M):
        limit = N0 + m + 1
        for n in range(limit):
            acc = 0.0
            for d in range(dk):
                acc += keys[n, d] * q_new[m, d]
            logits[n] = acc * inv_scale
        _softmax_into(logits, limit, attn)
        for n in range(limit):
            a = attn[n]
            for d in range(dm):
                out[m, d] += a * vproj[n, d]
    return out
