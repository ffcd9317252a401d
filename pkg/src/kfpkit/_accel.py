"""Numba switch.

Set ``KFPKIT_NUMBA=0`` to force the pure-numpy kernels. When numba is not
importable the numpy path is used regardless of the flag.
"""
from __future__ import annotations

import os

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        try:  # prefer OpenMP; the bundled TBB check only produces warnings here
            import numba.np.ufunc.omppool  # noqa: F401

            numba.config.THREADING_LAYER = "omp"
        except ImportError:
            numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range


def numba_enabled() -> bool:
    flag = os.environ.get("KFPKIT_NUMBA", "1").strip().lower()
    return HAVE_NUMBA and flag not in ("0", "false", "off", "no")


def set_threads(n: int) -> int:
    """Set the numba worker count, clamped to what the runtime allows."""
    if not HAVE_NUMBA:
        return 1
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


__all__ = ["HAVE_NUMBA", "njit", "prange", "numba_enabled", "set_threads"]
