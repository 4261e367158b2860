"""Vectorised numpy implementations of the hot kernels.

Each function mirrors its counterpart in ``_kernels_numba`` exactly; the
dispatcher in ``kernels`` picks one of the two at import time.
"""

import numpy as np

# below this ratio min(a,b)/max(a,b) the ring singularity is far away and the
# polar integral is done by Gauss-Legendre in t = cos(theta)
FAR_RATIO = 1.0 / 3.0


def _pow_diff(e, d, mu):
    """(e**(2 mu) - d**(2 mu)) / mu with the logarithmic limit at mu = 0."""
    if mu == 0.0:
        return 2.0 * np.log(e / d)
    return (e ** (2.0 * mu) - d ** (2.0 * mu)) / mu


def angular_g0(a, b, p):
    """Surface integral of |x - y|^-p over the sphere |y| = b, with |x| = a."""
    b = np.asarray(b, dtype=float)
    out = np.empty_like(b)
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    zero = lo == 0.0
    out[zero] = 4.0 * np.pi * hi[zero] ** (-p)
    nz = ~zero
    if np.any(nz):
        hi_, lo_ = hi[nz], lo[nz]
        rho = lo_ / hi_
        d = hi_ - lo_
        at = np.arctanh(rho)
        m = 1.0 - 0.5 * p
        if m == 0.0:
            f = 4.0 * at
        else:
            f = d ** (2.0 * m) * np.expm1(4.0 * m * at) / m
        out[nz] = np.pi * f / (a * b[nz])
    return out


def angular_d2(a, b, p, tn, tw):
    """Surface integral of (1 - t^2) |x - y|^-p, t the cosine between x and y."""
    b = np.asarray(b, dtype=float)
    out = np.empty_like(b)
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    zero = lo == 0.0
    out[zero] = (8.0 * np.pi / 3.0) * hi[zero] ** (-p)
    rho = np.where(zero, 0.0, lo / np.where(hi == 0.0, 1.0, hi))
    far = (~zero) & (rho <= FAR_RATIO)
    if np.any(far):
        bb = b[far][:, None]
        q = a * a + bb * bb - 2.0 * a * bb * tn[None, :]
        out[far] = 2.0 * np.pi * np.sum(tw * (1.0 - tn * tn) * q ** (-0.5 * p), axis=1)
    near = (~zero) & (rho > FAR_RATIO)
    if np.any(near):
        bb = b[near]
        e = a + bb
        d = np.abs(a - bb)
        P = 2.0 * a * bb
        j0 = _pow_diff(e, d, 1.0 - 0.5 * p)
        j1 = _pow_diff(e, d, 2.0 - 0.5 * p)
        j2 = _pow_diff(e, d, 3.0 - 0.5 * p)
        out[near] = 2.0 * np.pi / P**3 * (-j2 + (e * e + d * d) * j1 - e * e * d * d * j0)
    return out


def radial_kernel_sum(a, b, w, A, B, p, tn, tw):
    """sum_i w_i b_i^2 (A_i G0(a, b_i) + B_i D2(a, b_i))."""
    b = np.asarray(b, dtype=float)
    total = np.sum(w * b * b * A * angular_g0(a, b, p))
    if np.any(B != 0.0):
        total += np.sum(w * b * b * B * angular_d2(a, b, p, tn, tw))
    return float(total)


def pair_ratio_max(v1, v2, d, alpha):
    """Largest |v1 - v2| / d^alpha over pairs; returns (value, index)."""
    r = np.abs(v1 - v2) / d**alpha
    if r.size == 0:
        return 0.0, -1
    k = int(np.argmax(r))
    return float(r[k]), k


def cofactor_batch(mats):
    """Cofactor matrices of a stack of square matrices, by explicit minors."""
    mats = np.asarray(mats, dtype=float)
    n = mats.shape[-1]
    out = np.empty_like(mats)
    idx = np.arange(n)
    for i in range(n):
        rows = idx[idx != i]
        for j in range(n):
            cols = idx[idx != j]
            minor = mats[..., rows[:, None], cols[None, :]]
            sign = -1.0 if (i + j) % 2 else 1.0
            out[..., i, j] = sign * (np.linalg.det(minor) if n > 1 else 1.0)
    return out
