"""Spatial-temporal smoothing of raw importance and budgeted selection.

Raw per-query importance fluctuates step to step and drifts along the key
axis.  Temporal smoothing takes an exponential moving average of each key's
column across the observation window (newest query weighted highest).
Spatial smoothing then averages each key with its neighbors inside an
adaptive window whose width and offset are derived from the drift between
the front-half and rear-half importance centroids.  The most recent window
positions are never scored: they are pinned and always survive selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import BudgetError
from .indicator import ImportanceMatrix

__all__ = [
    "DEFAULT_ALPHA",
    "DEFAULT_BETA",
    "DEFAULT_WINDOW",
    "SmoothingConfig",
    "SmoothedScores",
    "SpatialParams",
    "EvictionDecision",
    "ema",
    "temporal_smooth",
    "spatial_params",
    "spatial_smooth",
    "select_top_b",
]

DEFAULT_ALPHA = 0.3
DEFAULT_BETA = 2000.0
DEFAULT_WINDOW = 32


@dataclass(frozen=True)
class SmoothingConfig:
    """Smoothing hyperparameters.

    ``alpha`` weights the newest query in the EMA, ``beta`` sets the
    granularity of the adaptive spatial window, ``window`` is the number of
    trailing queries observed (must be even: the spatial drift estimate
    splits it into equal halves).
    """

    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    window: int = DEFAULT_WINDOW

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.window < 2 or self.window % 2 != 0:
            raise ValueError("window must be a positive even count")


@dataclass(frozen=True)
class SmoothedScores:
    """Per-key scores with pinned (always-keep) flags.

    Pinned positions carry NaN rather than a sentinel 'arbitrarily large'
    float, keeping them out of neighbor averages; non-pinned scores are
    finite and non-negative.
    """

    scores: np.ndarray
    pinned: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        pinned = np.asarray(self.pinned, dtype=bool)
        if scores.ndim != 1 or pinned.shape != scores.shape:
            raise ValueError("scores and pinned flags must be matching 1-D arrays")
        live = scores[~pinned]
        if not np.all(np.isfinite(live)) or np.any(live < 0):
            raise ValueError("non-pinned scores must be finite and non-negative")
        if np.any(np.isfinite(scores[pinned])):
            raise ValueError("pinned positions must not carry a finite score")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "pinned", pinned)

    def __len__(self) -> int:
        return self.scores.shape[0]

    @property
    def num_pinned(self) -> int:
        return int(self.pinned.sum())


@dataclass(frozen=True)
class SpatialParams:
    """Adaptive spatial window derived from importance-centroid drift."""

    d_front: float
    d_rear: float
    w_s: int
    gamma_shift: int

    def __post_init__(self):
        if self.w_s < 1 or self.w_s % 2 == 0:
            raise ValueError("spatial window size must be odd and >= 1")


@dataclass(frozen=True)
class EvictionDecision:
    """Sorted kept-index set for one head under a budget."""

    kept: np.ndarray
    budget: int
    layer: Optional[int] = None
    head: Optional[int] = None

    def __post_init__(self):
        kept = np.asarray(self.kept, dtype=np.int64)
        if kept.ndim != 1:
            raise ValueError("kept indices must be 1-D")
        if kept.size and (np.any(np.diff(kept) <= 0) or kept[0] < 0):
            raise ValueError("kept indices must be strictly increasing and non-negative")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        object.__setattr__(self, "kept", kept)

    def with_ids(self, layer: int, head: int) -> "EvictionDecision":
        return replace(self, layer=layer, head=head)


def ema(series, alpha: float) -> float:
    """Exponential moving average, oldest to newest.

    e_0 = s_0;  e_i = alpha * s_i + (1 - alpha) * e_{i-1}.  The most recent
    element carries the largest single-step weight.
    """
    s = np.asarray(series, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("EMA needs a non-empty 1-D series")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    e = s[0]
    for x in s[1:]:
        e = alpha * x + (1.0 - alpha) * e
    return float(e)


def _ema_columns(scores: np.ndarray, alpha: float) -> np.ndarray:
    """EMA down each column of a (window x keys) block, rows oldest first."""
    e = scores[0].copy()
    for row in scores[1:]:
        e *= 1.0 - alpha
        e += alpha * row
    return e


def temporal_smooth(im: ImportanceMatrix, cfg: SmoothingConfig) -> SmoothedScores:
    """EMA each key's importance across the window; pin the window itself.

    Keys younger than the observation window get no score - they are
    flagged pinned.  A cache no longer than the window degenerates to
    everything pinned, which is valid, not an error.
    """
    if im.window != cfg.window:
        raise ValueError(
            f"importance matrix has {im.window} rows, config window is {cfg.window}"
        )
    n_keys = im.num_keys
    n_scored = max(0, n_keys - cfg.window)
    scores = np.full(n_keys, np.nan)
    pinned = np.ones(n_keys, dtype=bool)
    if n_scored:
        scores[:n_scored] = _ema_columns(im.scores[:, :n_scored], cfg.alpha)
        pinned[:n_scored] = False
    return SmoothedScores(scores=scores, pinned=pinned)


def _top_index_sum(row: np.ndarray, b: int) -> float:
    """Sum of the indices of the ``b`` largest entries (ties: lower index)."""
    order = np.argsort(-row, kind="stable")[:b]
    return float(order.sum())


def spatial_params(im: ImportanceMatrix, budget: int, cfg: SmoothingConfig) -> SpatialParams:
    """Derive the adaptive window from front/rear importance centroids.

    Each half of the window contributes the average index of its rows'
    top-``budget`` keys (all keys if the budget exceeds the cache).  The
    centroid difference, scaled by beta and floored, sets the window width
    and its signed shift; a non-positive difference lands in the +1 branch
    of the shift.
    """
    if im.window != cfg.window:
        raise ValueError(
            f"importance matrix has {im.window} rows, config window is {cfg.window}"
        )
    if budget < 1:
        raise ValueError("budget must be >= 1")
    half = cfg.window // 2
    b_eff = min(budget, im.num_keys)
    norm = 2.0 / (budget * cfg.window)
    d_front = norm * sum(_top_index_sum(im.scores[t], b_eff) for t in range(half))
    d_rear = norm * sum(
        _top_index_sum(im.scores[t], b_eff) for t in range(half, cfg.window)
    )
    diff = d_front - d_rear
    w_s = 2 * math.floor(abs(diff) / cfg.beta) + 1
    if diff > 0:
        gamma = math.floor(diff / cfg.beta)
    else:
        gamma = math.floor(diff / cfg.beta) + 1
    return SpatialParams(d_front=d_front, d_rear=d_rear, w_s=w_s, gamma_shift=gamma)


def spatial_smooth(scores: SmoothedScores, sp: SpatialParams) -> SmoothedScores:
    """Average each scored key over its shifted spatial window.

    The window around key ``n`` spans [n - w_s//2 + shift, n + w_s//2 + shift],
    truncated to valid non-pinned positions and normalized by the number of
    positions actually included.  A window that misses the scored range
    entirely leaves the key's score unchanged; pinned positions pass through.
    """
    n_scored = len(scores) - scores.num_pinned
    if n_scored == 0:
        return scores
    live = scores.scores[:n_scored]
    half = sp.w_s // 2
    lo = np.arange(n_scored) - half + sp.gamma_shift
    hi = np.arange(n_scored) + half + sp.gamma_shift + 1
    lo_c = np.clip(lo, 0, n_scored)
    hi_c = np.clip(hi, 0, n_scored)
    counts = hi_c - lo_c
    csum = np.concatenate([[0.0], np.cumsum(live)])
    sums = csum[hi_c] - csum[lo_c]
    smoothed = np.where(counts > 0, sums / np.maximum(counts, 1), live)
    out = scores.scores.copy()
    out[:n_scored] = smoothed
    return SmoothedScores(scores=out, pinned=scores.pinned)


def select_top_b(scores: SmoothedScores, budget: int) -> EvictionDecision:
    """Keep every pinned position plus the best-scoring others up to budget.

    Ties break toward the lower index, which makes kept sets nested across
    budgets.  A budget below the pinned count cannot honor the always-keep
    window and raises, naming the minimum feasible budget.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    n_keys = len(scores)
    num_pinned = scores.num_pinned
    if budget < num_pinned:
        raise BudgetError(
            f"budget {budget} cannot hold the {num_pinned} pinned positions",
            min_feasible=num_pinned,
        )
    if budget >= n_keys:
        kept = np.arange(n_keys, dtype=np.int64)
    else:
        live_idx = np.flatnonzero(~scores.pinned)
        order = np.argsort(-scores.scores[live_idx], kind="stable")
        chosen = live_idx[order[: budget - num_pinned]]
        kept = np.sort(np.concatenate([np.flatnonzero(scores.pinned), chosen]))
    return EvictionDecision(kept=kept, budget=budget)
