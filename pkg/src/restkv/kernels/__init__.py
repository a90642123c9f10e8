"""Backend dispatch for the hot kernels.

``RESTKV_BACKEND`` selects the implementation at import time:

* ``numba`` - require the jitted kernels (ImportError if numba is missing)
* ``numpy`` - force the pure-numpy fallback
* ``auto``  - numba when importable, numpy otherwise (default)

``ACTIVE_BACKEND`` records which one won.
"""

from __future__ import annotations

import os

_choice = os.environ.get("RESTKV_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"RESTKV_BACKEND must be 'auto', 'numba', or 'numpy', got {_choice!r}"
    )

if _choice == "numpy":
    from .numpy_backend import causal_attention, decode_outputs, indicator_scores

    ACTIVE_BACKEND = "numpy"
elif _choice == "numba":
    from .numba_backend import causal_attention, decode_outputs, indicator_scores

    ACTIVE_BACKEND = "numba"
else:
    try:
        from .numba_backend import causal_attention, decode_outputs, indicator_scores

        ACTIVE_BACKEND = "numba"
    except ImportError:
        from .numpy_backend import causal_attention, decode_outputs, indicator_scores

        ACTIVE_BACKEND = "numpy"

__all__ = ["ACTIVE_BACKEND", "causal_attention", "decode_outputs", "indicator_scores"]
