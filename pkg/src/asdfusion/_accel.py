"""Numba switch.

Hot loops are written twice: a numba ``@njit`` kernel and a pure-numpy
fallback.  Setting ``ASDFUSION_DISABLE_NUMBA=1`` (or running without numba
installed) selects the numpy path everywhere.
"""
import os

DISABLED = os.environ.get("ASDFUSION_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    from numba import njit, prange
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range

USE_NUMBA = HAS_NUMBA and not DISABLED


def backend():
    return "numba" if USE_NUMBA else "numpy"
