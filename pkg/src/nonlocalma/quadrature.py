"""Composite Gauss-Legendre building blocks shared by the integrators."""

import numpy as np

from .kernels import gauss_legendre


def panel_rule(breaks, order):
    """Nodes and weights of composite Gauss-Legendre on consecutive panels."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre(order)
    lo = breaks[:-1, None]
    half = 0.5 * np.diff(breaks)[:, None]
    nodes = lo + half * (x + 1.0)
    weights = half * w
    return nodes.ravel(), weights.ravel()


def power_map_rule(delta, q, order):
    """Rule for int_0^delta g(h) dh with h = delta * tau**q.

    With q chosen so that g(h) h^{...} dh becomes smooth in tau, this absorbs an
    algebraic endpoint singularity or cusp at h = 0.
    """
    x, w = gauss_legendre(order)
    tau = 0.5 * (x + 1.0)
    h = delta * tau**q
    weights = 0.5 * w * delta * q * tau ** (q - 1.0)
    return h, weights


def tail_rule(R, kappa, order):
    """Rule for int_R^inf g(b) db with b = R * tau**(-kappa), tau in (0, 1]."""
    x, w = gauss_legendre(order)
    tau = 0.5 * (x + 1.0)
    b = R * tau ** (-kappa)
    weights = 0.5 * w * R * kappa * tau ** (-kappa - 1.0)
    return b, weights


def singular_map_exponent(power):
    """Exponent q for ``power_map_rule`` when the integrand behaves like h**power.

    Picks the smallest integer k >= 1 with k >= power + 1 and returns
    q = k / (power + 1), turning h**power dh into a polynomial in tau.
    """
    e1 = power + 1.0
    if e1 <= 0:
        raise ValueError("non-integrable endpoint singularity")
    k = max(1.0, np.ceil(e1 - 1e-12))
    return k / e1


def dyadic_breaks(lo, hi, base=1.0, min_level=-3):
    """Powers of two (times base) strictly inside (lo, hi)."""
    if hi <= lo:
        return np.empty(0)
    top = int(np.ceil(np.log2(max(hi / base, 2.0 ** min_level)))) + 1
    pts = base * 2.0 ** np.arange(min_level, top + 1)
    return pts[(pts > lo) & (pts < hi)]


def merge_breaks(points, rel_gap=1e-9):
    """Sort and deduplicate breakpoints closer than rel_gap (relative)."""
    pts = np.unique(np.asarray(points, dtype=float))
    keep = [pts[0]]
    for p in pts[1:]:
        if p - keep[-1] > rel_gap * max(1.0, abs(p)):
            keep.append(p)
    return np.asarray(keep)


def graded_rule(delta, order, levels=10):
    """Rule on [delta 2^-levels, delta] with geometric panels.

    Panel k is [delta 2^-(k+1), delta 2^-k], each carrying plain Gauss-Legendre,
    so an algebraic singularity at h = 0 is resolved uniformly. The piece below
    delta 2^-levels is left to the caller (see ``inner_power_law``).
    """
    edges = delta * 2.0 ** -np.arange(levels, -1, -1.0)
    return panel_rule(edges, order)


def inner_power_law(g1, g2, h_c, power):
    """int_0^h_c g(h) dh from g1 = g(h_c), g2 = g(h_c / 2).

    The integrand is modelled as c_a h^power + c_b, which covers a paired
    singular kernel (the power term) plus a regular remainder (the constant).
    """
    if abs(power) < 1e-9:
        return g1 * h_c
    ca = (g1 - g2) / (1.0 - 2.0**-power)
    cb = g1 - ca
    return ca * h_c / (power + 1.0) + cb * h_c
