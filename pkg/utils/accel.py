"""
Opt-in numba acceleration. Set SIMPLEXDIFF_USE_NUMBA=1 (environment or .env)
to JIT-compile the hot kernels; without it, or without numba installed,
the kernels run as plain Python.
"""

import logging
import os
from typing import Callable

logger = logging.getLogger(__name__)

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - depends on the environment
    numba = None
    HAS_NUMBA = False


def numba_requested() -> bool:
    return os.getenv("SIMPLEXDIFF_USE_NUMBA", "0").strip().lower() in ("1", "true", "yes", "on")


def maybe_jit(fn: Callable) -> Callable:
    """Return a lazily compiled nopython version of ``fn`` when numba is requested."""
    if numba_requested() and HAS_NUMBA:
        logger.debug("compiling %s with numba", fn.__name__)
        return numba.njit(cache=False, nogil=True)(fn)
    if numba_requested():
        logger.warning("SIMPLEXDIFF_USE_NUMBA is set but numba is not installed; running %s in Python",
                       fn.__name__)
    return fn


def jit_now(fn: Callable) -> Callable:
    """Force compilation regardless of the environment switch (used by tests)."""
    if not HAS_NUMBA:
        raise ImportError("numba is not installed")
    return numba.njit(cache=False, nogil=True)(fn)
