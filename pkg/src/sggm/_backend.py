"""Selection of the numerical-kernel backend.

The inner loops in :mod:`sggm._kernels` exist in two flavours: numba-compiled
(default) and pure numpy. The backend is chosen once at import time from the
``SGGM_BACKEND`` environment variable (``"numba"`` or ``"numpy"``); the numpy
path is also used automatically when numba is not importable.
"""

import os
import warnings

_requested = os.environ.get("SGGM_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    warnings.warn(
        f"unrecognized SGGM_BACKEND={_requested!r}; falling back to 'numba'",
        stacklevel=2,
    )
    _requested = "numba"

USE_NUMBA = _requested == "numba"
if USE_NUMBA:
    try:
        from numba import njit as _numba_njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(func):
    """Compile ``func`` with numba when the numba backend is active."""
    if USE_NUMBA:
        return _numba_njit(cache=True)(func)
    return func
