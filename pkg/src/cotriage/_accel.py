"""Numba switch.

Set ``COTRIAGE_NUMBA=0`` to force the pure-numpy kernels. The flag is read
once at import time; numba missing from the environment has the same effect.
"""

import os

_FLAG = os.environ.get("COTRIAGE_NUMBA", "1").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - depends on environment
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, else identity."""
    if _numba is None:  # pragma: no cover
        return func
    return _numba.njit(cache=True)(func)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
