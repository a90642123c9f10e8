"""Eviction policies and per-layer budget schedules.

``rest_kv`` is the reconstruction-scored method (indicator + smoothing);
``snap_attn`` is the pooled attention-weight baseline; ``streaming`` keeps a
few sink tokens plus the most recent ones; ``random`` is the lower-bound
control.  Decode-time evictors are out of scope: every policy here selects
once, after prefill.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from .attention import HeadInstance
from .errors import BudgetError
from .indicator import indicator_matrix
from .smoothing import (
    DEFAULT_WINDOW,
    EvictionDecision,
    SmoothedScores,
    SmoothingConfig,
    select_top_b,
    spatial_params,
    spatial_smooth,
    temporal_smooth,
)

__all__ = [
    "POLICY_KINDS",
    "DEFAULT_SINK",
    "DEFAULT_KERNEL",
    "Policy",
    "BudgetPlan",
    "rest_kv_scores",
    "snap_attn_scores",
    "streaming_keep",
    "random_keep",
    "make_budget_plan",
]

POLICY_KINDS = ("rest_kv", "snap_attn", "streaming", "random")
DEFAULT_SINK = 4
DEFAULT_KERNEL = 5


@dataclass(frozen=True)
class Policy:
    """An eviction policy plus its policy-specific knobs."""

    kind: str
    kernel: int = DEFAULT_KERNEL
    sink: int = DEFAULT_SINK
    seed: int = 0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}, expected one of {POLICY_KINDS}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError("pooling kernel must be odd and >= 1")
        if self.sink < 0:
            raise ValueError("sink size must be >= 0")


@dataclass(frozen=True)
class BudgetPlan:
    """Per-head KV budget for each layer."""

    per_layer: tuple

    def __post_init__(self):
        entries = tuple(int(b) for b in self.per_layer)
        if not entries:
            raise ValueError("budget plan needs at least one layer")
        if any(b < 1 for b in entries):
            raise ValueError("every layer budget must be >= 1")
        object.__setattr__(self, "per_layer", entries)

    @property
    def total(self) -> int:
        return sum(self.per_layer)

    def __len__(self) -> int:
        return len(self.per_layer)


def rest_kv_scores(instance: HeadInstance, budget: int, cfg: SmoothingConfig) -> SmoothedScores:
    """Full reconstruction-scoring pass: indicator, EMA, adaptive window."""
    im = indicator_matrix(instance)
    smoothed = temporal_smooth(im, cfg)
    sp = spatial_params(im, budget, cfg)
    return spatial_smooth(smoothed, sp)


def _pool_1d(values: np.ndarray, kernel: int) -> np.ndarray:
    """Centered average pooling, truncated at the edges (count-normalized)."""
    if kernel == 1 or values.size == 0:
        return values.copy()
    n = values.size
    half = kernel // 2
    lo = np.clip(np.arange(n) - half, 0, n)
    hi = np.clip(np.arange(n) + half + 1, 0, n)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    return (csum[hi] - csum[lo]) / (hi - lo)


def snap_attn_scores(instance: HeadInstance, kernel: int = DEFAULT_KERNEL) -> SmoothedScores:
    """Attention-weight baseline: mean window attention, average-pooled.

    Per-key score is the mean attention weight over the observation window,
    pooled along the key axis.  The window positions themselves are pinned,
    mirroring the reconstruction policy so comparisons stay fair.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError("pooling kernel must be odd and >= 1")
    cache = instance.cache
    n_keys = len(cache)
    window = instance.queries.shape[0]
    if n_keys < 1 or window < 1 or window > n_keys:
        raise ValueError("observation window must fit inside the cache")
    inv_scale = 1.0 / np.sqrt(cache.d_k)
    attn = kernels.causal_attention(
        np.ascontiguousarray(instance.queries), cache.keys, inv_scale
    )
    mean_attn = attn.mean(axis=0)
    n_scored = max(0, n_keys - window)
    scores = np.full(n_keys, np.nan)
    pinned = np.ones(n_keys, dtype=bool)
    if n_scored:
        scores[:n_scored] = _pool_1d(mean_attn[:n_scored], kernel)
        pinned[:n_scored] = False
    return SmoothedScores(scores=scores, pinned=pinned)


def streaming_keep(n_keys: int, budget: int, sink: int = DEFAULT_SINK) -> EvictionDecision:
    """Keep the first ``sink`` tokens and the most recent ``budget - sink``."""
    if n_keys < 1:
        raise ValueError("cache must be non-empty")
    if sink < 0:
        raise ValueError("sink size must be >= 0")
    if budget <= sink:
        raise BudgetError(
            f"budget {budget} leaves no room for recent tokens after a sink of {sink}",
            min_feasible=sink + 1,
        )
    if budget >= n_keys:
        kept = np.arange(n_keys, dtype=np.int64)
    else:
        head = np.arange(min(sink, n_keys), dtype=np.int64)
        tail = np.arange(n_keys - (budget - sink), n_keys, dtype=np.int64)
        kept = np.unique(np.concatenate([head, tail]))
    return EvictionDecision(kept=kept, budget=budget)


def random_keep(
    n_keys: int, budget: int, seed: int, window: int = DEFAULT_WINDOW
) -> EvictionDecision:
    """Uniform random keep-set (seeded), with the recent window pinned first
    so the control is comparable to the scoring policies."""
    if n_keys < 1:
        raise ValueError("cache must be non-empty")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if budget >= n_keys:
        kept = np.arange(n_keys, dtype=np.int64)
    else:
        num_pinned = min(window, budget, n_keys)
        pin_start = n_keys - num_pinned
        rng = np.random.default_rng(seed)
        extra = rng.choice(pin_start, size=budget - num_pinned, replace=False)
        kept = np.sort(
            np.concatenate([extra.astype(np.int64), np.arange(pin_start, n_keys)])
        )
    return EvictionDecision(kept=kept, budget=budget)


def make_budget_plan(
    kind: str, layers: int, per_layer: int, window: int = DEFAULT_WINDOW
) -> BudgetPlan:
    """Uniform or pyramid per-layer budgets totalling ``layers * per_layer``.

    The pyramid ramps linearly from ``2n - m`` at the first layer down to
    ``m = max(1, window)`` at the last, rounded by largest remainder so the
    total is conserved exactly.
    """
    if layers < 1 or per_layer < 1:
        raise ValueError("layer count and per-layer budget must be >= 1")
    if kind == "uniform":
        return BudgetPlan(per_layer=(per_layer,) * layers)
    if kind != "pyramid":
        raise ValueError(f"unknown budget plan kind {kind!r}")
    if layers == 1:
        return BudgetPlan(per_layer=(per_layer,))
    floor_budget = max(1, window)
    start = 2 * per_layer - floor_budget
    if start < 1:
        raise ValueError(
            f"pyramid infeasible: per-layer budget {per_layer} too small for floor {floor_budget}"
        )
    # Exact arithmetic: the raw ramp endpoints average to per_layer, so the
    # real-valued total is already layers * per_layer.
    step = Fraction(floor_budget - start, layers - 1)
    raw = [Fraction(start) + step * i for i in range(layers)]
    base = [int(r) if r.denominator == 1 else r.numerator // r.denominator for r in raw]
    remainder = layers * per_layer - sum(base)
    fracs = sorted(range(layers), key=lambda i: (-(raw[i] - base[i]), i))
    for i in fracs[:remainder]:
        base[i] += 1
    if any(b < 1 for b in base):
        raise ValueError("pyramid infeasible: a layer budget fell below 1")
    return BudgetPlan(per_layer=tuple(base))
