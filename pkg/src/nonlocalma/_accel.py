"""Backend selection for the hot quadrature kernels.

Set ``NONLOCALMA_DISABLE_NUMBA=1`` to force the pure-numpy path (useful for
debugging and for comparing the two backends).
"""

import os

_FLAG = os.environ.get("NONLOCALMA_DISABLE_NUMBA", "").strip().lower()


def _numba_available():
    if _FLAG in ("1", "true", "yes", "on"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _numba_available()
