"""Minimal dense linear-algebra kernel: validated vectors/matrices, stable
softmax, L2 norm, matmul.

All values are 64-bit floats.  Constructors reject non-finite entries and
return read-only arrays, so everything downstream can be shared freely
across threads.  No broadcasting: dimension mismatches raise immediately.
"""

from __future__ import annotations

import numpy as np

__all__ = ["as_vector", "as_matrix", "stable_softmax", "l2_norm", "matmul"]


def as_vector(data) -> np.ndarray:
    """Validate and freeze a 1-D float64 vector.

    Raises ValueError on wrong rank or non-finite entries.
    """
    v = np.array(data, dtype=np.float64, order="C")
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite (no NaN/Inf)")
    v.flags.writeable = False
    return v


def as_matrix(data) -> np.ndarray:
    """Validate and freeze a 2-D row-major float64 matrix."""
    m = np.array(data, dtype=np.float64, order="C")
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite (no NaN/Inf)")
    m.flags.writeable = False
    return m


def stable_softmax(logits) -> np.ndarray:
    """Softmax in max-subtraction form.

    Invariant under adding a constant to all logits; output sums to 1 and
    every entry lies in (0, 1].
    """
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("softmax requires a non-empty 1-D input")
    if not np.all(np.isfinite(x)):
        raise ValueError("softmax input must be finite")
    e = np.exp(x - x.max())
    return e / e.sum()


def l2_norm(v) -> float:
    """Euclidean norm; zero iff all entries are zero."""
    x = np.asarray(v, dtype=np.float64)
    return float(np.linalg.norm(x))


def matmul(a, b) -> np.ndarray:
    """Standard matrix product with explicit dimension checking."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul operands must both be 2-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})"
        )
    return a @ b
