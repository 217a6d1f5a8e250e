"""Selects between numba-compiled kernels and their pure-numpy twins.

Set ``RISKWILD_DISABLE_NUMBA=1`` before import to force the numpy path
(useful when numba is missing or when debugging a kernel).
"""

import os

_FLAG = os.environ.get("RISKWILD_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise.

    The compiled object is always created when numba exists so both paths
    stay testable; ``USE_NUMBA`` only decides which one is exported.
    """
    if _numba is None:
        return func
    return _numba.njit(cache=True, nogil=True)(func)
