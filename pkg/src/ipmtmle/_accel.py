"""JIT switch.

Hot kernels are compiled with numba when it is importable and the
``IPMTMLE_NUMBA`` environment variable is not set to ``0``.  Otherwise
every kernel falls back to its vectorised numpy twin, which is also what
the test-suite compares against.
"""

import os

_flag = os.environ.get("IPMTMLE_NUMBA", "1").strip().lower()

try:
    if _flag in ("0", "false", "no", "off"):
        raise ImportError
    import numba as _numba

    NUMBA_ENABLED = True
except ImportError:
    _numba = None
    NUMBA_ENABLED = False


def njit(func=None, **kwargs):
    """``numba.njit`` when available, identity otherwise."""
    if not NUMBA_ENABLED:
        if func is not None:
            return func
        return lambda f: f
    kwargs.setdefault("cache", True)
    if func is not None:
        return _numba.njit(**kwargs)(func)
    return _numba.njit(**kwargs)
