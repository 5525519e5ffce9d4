"""Backend switch for the compiled kernels.

Hot loops (GRU time recurrence, R-peak threshold scan) exist twice: a numba
``@njit`` version and a plain numpy version. The numba path is used when numba
imports and ``MUSEPERS_DISABLE_NUMBA`` is unset or falsy; set it to ``1`` to
force the numpy path (useful for debugging and for the benchmark).
"""
import os

DISABLE_ENV = "MUSEPERS_DISABLE_NUMBA"

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _flag_set(value):
    return value.strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _flag_set(os.environ.get(DISABLE_ENV, ""))


def njit(func):
    """Compile ``func`` with numba if available, else return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True, error_model="numpy")(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl
