"""Backend selection for the hot numeric kernels.

Every kernel in this package exists twice: a numba ``@njit`` version and a
plain numpy version. Which one is exported is decided once, at import time,
from the ``AQCEKIT_BACKEND`` environment variable (``numba`` or ``numpy``).
If numba cannot be imported the numpy path is used regardless.
"""

import os

BACKEND_ENV = "AQCEKIT_BACKEND"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_requested = os.environ.get(BACKEND_ENV, "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {_requested!r}")

USE_NUMBA = HAVE_NUMBA and _requested == "numba"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise.

    The jitted function is always built (lazily, on first call) so tests can
    compare both paths in one process even when the numpy backend is active.
    """
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl
