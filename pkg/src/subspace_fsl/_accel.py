"""Optional numba acceleration.

Set ``SUBSPACE_FSL_DISABLE_NUMBA=1`` to force the pure-numpy kernels.
The flag is read once, at import time.
"""
import os

_FLAG = "SUBSPACE_FSL_DISABLE_NUMBA"


def _truthy(value):
    return value.strip().lower() not in ("", "0", "false", "no", "off")


try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _truthy(os.environ.get(_FLAG, ""))


def njit(func=None, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    The decorated function is always compiled when numba exists so that both
    code paths stay importable for benchmarks and cross-path tests; which one
    the library dispatches to is decided by ``USE_NUMBA``.
    """
    kwargs.setdefault("cache", False)

    def wrap(f):
        if not HAS_NUMBA:
            return f
        return numba.njit(**kwargs)(f)

    if func is not None:
        return wrap(func)
    return wrap


def backend():
    return "numba" if USE_NUMBA else "numpy"
