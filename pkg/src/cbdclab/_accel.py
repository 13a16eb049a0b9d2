"""Optional numba acceleration.

Set ``CBDCLAB_BACKEND=numpy`` to force the pure-numpy kernels even when numba
is importable. Any other value (or unset) picks numba when available.
"""

from __future__ import annotations

import functools
import os

_requested = os.environ.get("CBDCLAB_BACKEND", "numba").strip().lower()

try:
    if _requested == "numpy":
        raise ImportError("numba disabled by CBDCLAB_BACKEND")
    from numba import njit

    NUMBA_OK = True
except ImportError:
    NUMBA_OK = False

    def njit(*args, **kwargs):
        def decorator(f):
            @functools.wraps(f)
            def wrapper(*a, **kw):
                return f(*a, **kw)

            return wrapper

        if len(args) == 1 and callable(args[0]) and not kwargs:
            return decorator(args[0])
        return decorator


BACKEND = "numba" if NUMBA_OK else "numpy"

__all__ = ["njit", "NUMBA_OK", "BACKEND"]
