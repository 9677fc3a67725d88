"""Numba switch.

Set ``MBLPROP_DISABLE_NUMBA=1`` to force the pure-numpy code paths (useful for
debugging, coverage runs and the kernel benchmark). The flag is read once at
import time.
"""
import os

_FLAG = os.environ.get("MBLPROP_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrapper(f):
        return f

    return wrapper
