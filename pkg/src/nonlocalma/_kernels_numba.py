"""numba versions of the hot kernels (same signatures as ``_kernels_numpy``)."""

import math

import numba
import numpy as np

FAR_RATIO = 1.0 / 3.0


@numba.njit(cache=True, nogil=True)
def _pow_diff(e, d, mu):
    if mu == 0.0:
        return 2.0 * math.log(e / d)
    return (e ** (2.0 * mu) - d ** (2.0 * mu)) / mu


@numba.njit(cache=True, nogil=True)
def _g0(a, b, p):
    hi = max(a, b)
    lo = min(a, b)
    if lo == 0.0:
        return 4.0 * math.pi * hi ** (-p)
    rho = lo / hi
    d = hi - lo
    at = math.atanh(rho)
    m = 1.0 - 0.5 * p
    if m == 0.0:
        f = 4.0 * at
    else:
        f = d ** (2.0 * m) * math.expm1(4.0 * m * at) / m
    return math.pi * f / (a * b)


@numba.njit(cache=True, nogil=True)
def _d2(a, b, p, tn, tw):
    hi = max(a, b)
    lo = min(a, b)
    if lo == 0.0:
        return (8.0 * math.pi / 3.0) * hi ** (-p)
    rho = lo / hi
    if rho <= FAR_RATIO:
        s = 0.0
        for k in range(tn.size):
            q = a * a + b * b - 2.0 * a * b * tn[k]
            s += tw[k] * (1.0 - tn[k] * tn[k]) * q ** (-0.5 * p)
        return 2.0 * math.pi * s
    e = a + b
    d = abs(a - b)
    P = 2.0 * a * b
    j0 = _pow_diff(e, d, 1.0 - 0.5 * p)
    j1 = _pow_diff(e, d, 2.0 - 0.5 * p)
    j2 = _pow_diff(e, d, 3.0 - 0.5 * p)
    return 2.0 * math.pi / P**3 * (-j2 + (e * e + d * d) * j1 - e * e * d * d * j0)


@numba.njit(cache=True, nogil=True)
def angular_g0(a, b, p):
    out = np.empty(b.size)
    for i in range(b.size):
        out[i] = _g0(a, b[i], p)
    return out


@numba.njit(cache=True, nogil=True)
def angular_d2(a, b, p, tn, tw):
    out = np.empty(b.size)
    for i in range(b.size):
        out[i] = _d2(a, b[i], p, tn, tw)
    return out


@numba.njit(cache=True, nogil=True)
def radial_kernel_sum(a, b, w, A, B, p, tn, tw):
    total = 0.0
    for i in range(b.size):
        bi = b[i]
        term = A[i] * _g0(a, bi, p)
        if B[i] != 0.0:
            term += B[i] * _d2(a, bi, p, tn, tw)
        total += w[i] * bi * bi * term
    return total


@numba.njit(cache=True, nogil=True)
def pair_ratio_max(v1, v2, d, alpha):
    best = 0.0
    k = -1
    for i in range(v1.size):
        r = abs(v1[i] - v2[i]) / d[i] ** alpha
        if k < 0 or r > best:
            best = r
            k = i
    return best, k


@numba.njit(cache=True, nogil=True)
def _det(m, work):
    """Determinant by Gaussian elimination with partial pivoting on a scratch copy."""
    k = m.shape[0]
    for r in range(k):
        for c in range(k):
            work[r, c] = m[r, c]
    det = 1.0
    for col in range(k):
        piv = col
        for r in range(col + 1, k):
            if abs(work[r, col]) > abs(work[piv, col]):
                piv = r
        if work[piv, col] == 0.0:
            return 0.0
        if piv != col:
            for c in range(k):
                tmp = work[col, c]
                work[col, c] = work[piv, c]
                work[piv, c] = tmp
            det = -det
        det *= work[col, col]
        for r in range(col + 1, k):
            fac = work[r, col] / work[col, col]
            for c in range(col + 1, k):
                work[r, c] -= fac * work[col, c]
    return det


@numba.njit(cache=True, nogil=True)
def cofactor_batch(mats):
    N, n, _ = mats.shape
    out = np.empty_like(mats)
    minor = np.empty((n - 1, n - 1))
    work = np.empty((n - 1, n - 1))
    for k in range(N):
        for i in range(n):
            for j in range(n):
                ri = 0
                for r in range(n):
                    if r == i:
                        continue
                    ci = 0
                    for c in range(n):
                        if c == j:
                            continue
                        minor[ri, ci] = mats[k, r, c]
                        ci += 1
                    ri += 1
                sign = -1.0 if (i + j) % 2 else 1.0
                out[k, i, j] = sign * (_det(minor, work) if n > 1 else 1.0)
    return out
