"""Dispatch between the numba kernels and the pure-numpy fallback.

Both backends expose ``angular_g0``, ``angular_d2``, ``radial_kernel_sum``,
``pair_ratio_max`` and ``cofactor_batch``. Inputs are coerced to contiguous
float64 here so the compiled versions see a single signature.
"""

from functools import lru_cache

import numpy as np

from . import _accel
from . import _kernels_numpy

if _accel.USE_NUMBA:
    from . import _kernels_numba as _impl
else:
    _impl = _kernels_numpy

BACKEND = "numba" if _accel.USE_NUMBA else "numpy"

# Gauss-Legendre order for the far-ratio polar integrals
POLAR_NODES = 32


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on [-1, 1] (cached, read-only)."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def angular_g0(a, b, p, backend=None):
    impl = _pick(backend)
    return impl.angular_g0(float(a), _f64(np.atleast_1d(b)), float(p))


def angular_d2(a, b, p, backend=None):
    impl = _pick(backend)
    tn, tw = gauss_legendre(POLAR_NODES)
    return impl.angular_d2(float(a), _f64(np.atleast_1d(b)), float(p), _f64(tn), _f64(tw))


def radial_kernel_sum(a, b, w, A, B, p, backend=None):
    impl = _pick(backend)
    tn, tw = gauss_legendre(POLAR_NODES)
    b = _f64(b)
    A = _f64(np.broadcast_to(A, b.shape))
    B = _f64(np.broadcast_to(B, b.shape))
    return float(impl.radial_kernel_sum(float(a), b, _f64(w), A, B, float(p), _f64(tn), _f64(tw)))


def pair_ratio_max(v1, v2, d, alpha, backend=None):
    impl = _pick(backend)
    best, k = impl.pair_ratio_max(_f64(v1), _f64(v2), _f64(d), float(alpha))
    return float(best), int(k)


def cofactor_batch(mats, backend=None):
    impl = _pick(backend)
    mats = _f64(mats)
    shape = mats.shape
    out = impl.cofactor_batch(mats.reshape((-1,) + shape[-2:]))
    return np.asarray(out).reshape(shape)


def _pick(backend):
    if backend is None:
        return _impl
    if backend == "numpy":
        return _kernels_numpy
    if backend == "numba":
        from . import _kernels_numba

        return _kernels_numba
    raise ValueError(f"unknown backend {backend!r}")
