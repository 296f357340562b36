"""Numba switch.

Hot kernels exist twice: an ``@njit`` loop version and a vectorised numpy
version. ``UNSURF_DISABLE_NUMBA=1`` (or a missing numba install) selects the
numpy path. ``USE_NUMBA`` is read at call time, so tests and benchmarks can
flip it in-process.
"""
import os

_DISABLED = os.environ.get("UNSURF_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba

    # the installed TBB is too old for numba and only triggers a warning
    if numba.config.THREADING_LAYER == "default":
        numba.config.THREADING_LAYER = "omp"
    HAS_NUMBA = True
    njit = numba.njit(cache=True, nogil=True)
    njit_parallel = numba.njit(cache=True, nogil=True, parallel=True)
    prange = numba.prange
except ImportError:
    numba = None
    HAS_NUMBA = False

    def njit(f):
        return f

    njit_parallel = njit
    prange = range

USE_NUMBA = HAS_NUMBA


def use_numba():
    return USE_NUMBA and HAS_NUMBA


def set_threads(n):
    """Set the kernel worker count. Never changes results, only speed."""
    if n is None or not HAS_NUMBA:
        return
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
