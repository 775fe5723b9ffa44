"""JIT shim: hot kernels use numba @njit unless TDSLAB_DISABLE_NUMBA is set.

With TDSLAB_DISABLE_NUMBA=1 (or numba missing) every kernel runs as plain
numpy/Python from the same source, so both paths stay testable against each
other.  The flag is read once at import time.
"""

import os


def _numba_wanted() -> bool:
    flag = os.environ.get("TDSLAB_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


NUMBA_ENABLED = False
if _numba_wanted():
    try:
        from numba import njit as _numba_njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


if NUMBA_ENABLED:

    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        if len(args) == 1 and callable(args[0]):
            return _numba_njit(cache=kwargs["cache"])(args[0])
        return _numba_njit(*args, **kwargs)

else:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def deco(f):
            return f

        return deco
