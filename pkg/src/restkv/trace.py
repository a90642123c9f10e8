"""On-disk attention traces: binary format, reader/writer, synthetic generator.

A trace bundles everything one evaluation run needs: per-layer-per-head
projection matrices, the shared prompt token embeddings, and optional decode
token embeddings.  Layout (little-endian):

    magic   4 bytes  b"RKV1"
    version u32      currently 1
    dims    7 x u32  layers, heads, n_prompt, n_decode, d_model, d_k, d_v
    tensors f32      per layer, per head: W_Q (d_model x d_k),
                     W_K (d_model x d_k), W_V (d_model x d_v),
                     W_O (d_v x d_model); then prompt embeddings
                     (n_prompt x d_model); then decode embeddings
                     (n_decode x d_model)

Tensors are stored as 32-bit floats and widened to 64-bit in memory; the
generator rounds through float32 so in-memory values match the file exactly
and write -> read -> write is byte-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .attention import HeadParams
from .errors import TraceFormatError

__all__ = ["MAGIC", "FORMAT_VERSION", "TraceDims", "Trace", "generate_trace", "write_trace", "read_trace"]

MAGIC = b"RKV1"
FORMAT_VERSION = 1

# Synthetic generator knobs.  Weight entries are scaled by 1/sqrt(fan-in) so
# attention logits keep unit-order variance instead of saturating to one-hot;
# planted tokens get embeddings this many times wider than the background and
# stay clear of the sequence edges and the trailing observation window.
SALIENCE_SCALE = 6.0
PLANT_MARGIN = 8
PLANT_WINDOW_GUARD = 32


@dataclass(frozen=True)
class TraceDims:
    layers: int
    heads: int
    n_prompt: int
    n_decode: int
    d_model: int
    d_k: int
    d_v: int

    def __post_init__(self):
        for name in ("layers", "heads", "n_prompt", "d_model", "d_k", "d_v"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_decode < 0:
            raise ValueError("n_decode must be >= 0")


@dataclass
class Trace:
    """In-memory trace.  ``planted`` lists the positions of any high-salience
    tokens injected by the clustered generator; it is derived metadata and is
    not serialized."""

    dims: TraceDims
    params: List[List[HeadParams]]
    prompt: np.ndarray
    decode: np.ndarray
    planted: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        d = self.dims
        if len(self.params) != d.layers or any(len(row) != d.heads for row in self.params):
            raise ValueError("params must be a layers x heads grid")
        self.prompt = np.asarray(self.prompt, dtype=np.float64)
        self.decode = np.asarray(self.decode, dtype=np.float64)
        if self.prompt.shape != (d.n_prompt, d.d_model):
            raise ValueError("prompt embeddings have the wrong shape")
        if self.decode.shape != (d.n_decode, d.d_model):
            raise ValueError("decode embeddings have the wrong shape")


def _f32_exact(arr: np.ndarray) -> np.ndarray:
    """Round to float32 precision, keep float64 dtype (memory == disk)."""
    return arr.astype(np.float32).astype(np.float64)


def generate_trace(seed: int, dims: TraceDims, distribution: str = "gaussian") -> Trace:
    """Deterministic synthetic trace.

    ``gaussian`` draws unit-normal token embeddings and 1/sqrt(fan-in)-scaled
    projection weights.  ``clustered`` additionally plants a small set of
    wide-magnitude tokens in the evictable region - removing them measurably
    hurts output reconstruction, giving a retrieval-style target.
    """
    if distribution not in ("gaussian", "clustered"):
        raise ValueError(f"unknown distribution {distribution!r}")
    rng = np.random.default_rng(seed)
    d = dims
    params: List[List[HeadParams]] = []
    w_scale = 1.0 / np.sqrt(d.d_model)
    o_scale = 1.0 / np.sqrt(d.d_v)
    for _ in range(d.layers):
        row = []
        for _ in range(d.heads):
            row.append(
                HeadParams(
                    w_q=_f32_exact(rng.standard_normal((d.d_model, d.d_k)) * w_scale),
                    w_k=_f32_exact(rng.standard_normal((d.d_model, d.d_k)) * w_scale),
                    w_v=_f32_exact(rng.standard_normal((d.d_model, d.d_v)) * w_scale),
                    w_o=_f32_exact(rng.standard_normal((d.d_v, d.d_model)) * o_scale),
                )
            )
        params.append(row)
    prompt = rng.standard_normal((d.n_prompt, d.d_model))
    decode = rng.standard_normal((d.n_decode, d.d_model))
    planted = None
    if distribution == "clustered":
        lo = PLANT_MARGIN
        hi = d.n_prompt - PLANT_WINDOW_GUARD - PLANT_MARGIN
        if hi <= lo:
            raise ValueError("prompt too short to plant salient tokens")
        count = max(1, d.n_prompt // 64)
        planted = np.sort(rng.choice(np.arange(lo, hi), size=min(count, hi - lo), replace=False))
        prompt[planted] = SALIENCE_SCALE * rng.standard_normal((planted.size, d.d_model))
    return Trace(
        dims=d,
        params=params,
        prompt=_f32_exact(prompt),
        decode=_f32_exact(decode),
        planted=planted,
    )


def _tensor_order(trace: Trace):
    """Tensors in serialization order."""
    for row in trace.params:
        for p in row:
            yield p.w_q
            yield p.w_k
            yield p.w_v
            yield p.w_o
    yield trace.prompt
    yield trace.decode


def trace_to_bytes(trace: Trace) -> bytes:
    d = trace.dims
    header = MAGIC + struct.pack(
        "<8I", FORMAT_VERSION, d.layers, d.heads, d.n_prompt, d.n_decode, d.d_model, d.d_k, d.d_v
    )
    payload = b"".join(np.ascontiguousarray(t, dtype="<f4").tobytes() for t in _tensor_order(trace))
    return header + payload


def write_trace(trace: Trace, path) -> None:
    Path(path).write_bytes(trace_to_bytes(trace))


def _expected_floats(d: TraceDims) -> int:
    per_head = 2 * d.d_model * d.d_k + d.d_model * d.d_v + d.d_v * d.d_model
    return d.layers * d.heads * per_head + (d.n_prompt + d.n_decode) * d.d_model


def trace_from_bytes(data: bytes) -> Trace:
    if len(data) < 4 or data[:4] != MAGIC:
        raise TraceFormatError("bad magic, not a trace file", offset=0)
    if len(data) < 36:
        raise TraceFormatError("truncated header", offset=len(data))
    version, = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise TraceFormatError(f"unsupported format version {version}", offset=4)
    raw_dims = struct.unpack_from("<7I", data, 8)
    try:
        dims = TraceDims(*raw_dims)
    except ValueError as exc:
        raise TraceFormatError(f"invalid dimensions: {exc}", offset=8) from exc
    n_floats = _expected_floats(dims)
    expected = 36 + 4 * n_floats
    if len(data) < expected:
        raise TraceFormatError(
            f"truncated payload: expected {expected} bytes, got {len(data)}", offset=len(data)
        )
    if len(data) > expected:
        raise TraceFormatError("trailing bytes after payload", offset=expected)
    flat = np.frombuffer(data, dtype="<f4", count=n_floats, offset=36).astype(np.float64)
    pos = 0

    def take(rows: int, cols: int) -> np.ndarray:
        nonlocal pos
        block = flat[pos : pos + rows * cols].reshape(rows, cols)
        pos += rows * cols
        return block

    d = dims
    params: List[List[HeadParams]] = []
    for _ in range(d.layers):
        row = []
        for _ in range(d.heads):
            row.append(
                HeadParams(
                    w_q=take(d.d_model, d.d_k),
                    w_k=take(d.d_model, d.d_k),
                    w_v=take(d.d_model, d.d_v),
                    w_o=take(d.d_v, d.d_model),
                )
            )
        params.append(row)
    prompt = take(d.n_prompt, d.d_model)
    decode = take(d.n_decode, d.d_model) if d.n_decode else np.zeros((0, d.d_model))
    return Trace(dims=dims, params=params, prompt=prompt, decode=decode)


def read_trace(path) -> Trace:
    return trace_from_bytes(Path(path).read_bytes())
