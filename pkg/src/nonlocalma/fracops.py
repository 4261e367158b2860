"""Singular-integral quadrature for the fractional Laplacian and its relatives.

Two evaluation paths share one zone layout (near / mid / tail):

* the radial path (n = 3, radial integrands) integrates over |y| = b with the
  closed-form sphere averages from ``kernels``;
* the brute-force path integrates over R^3 directly in polar coordinates about
  the evaluation point and also serves non-radial fields.

The near zone |x - y| <= near_radius pairs y = x + z with y = x - z, which
removes the principal-value singularity. Beyond the tail radius each field is
replaced by its DecayProfile power law anchored at the tail radius.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import kernels
from .kernels import gauss_legendre
from .quadrature import (
    dyadic_breaks,
    graded_rule,
    inner_power_law,
    merge_breaks,
    panel_rule,
    tail_rule,
)

TAIL_MODELS = ("power_law", "none")

# the graded near zone stops at near_radius * 2^-NEAR_LEVELS; below that the
# paired integrand is closed by its leading power law, since floating-point
# noise in second differences would dominate at smaller offsets
NEAR_LEVELS = 10
# radial evaluations below this radius use the origin rule; a radial profile is
# even in r, so the change is O(r^2) and far below roundoff
ORIGIN_SNAP = 1e-8


# constants ------------------------------------------------------------------


def normalization_constant(n, s):
    """Return (c_{n,s}, c_{n,-s}) for the fractional Laplacian and its inverse.

    Examples
    --------
    >>> c, _ = normalization_constant(3, 0.5)
    >>> abs(c - 1 / math.pi**2) < 1e-15
    True
    """
    if n < 1:
        raise ValueError("dimension must be >= 1")
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    if n <= 2 * s:
        raise ValueError("need n > 2s")
    c_plus = 4.0**s * math.gamma(0.5 * n + s) / (math.pi ** (0.5 * n) * abs(math.gamma(-s)))
    c_minus = math.gamma(0.5 * n - s) / (4.0**s * math.pi ** (0.5 * n) * math.gamma(s))
    return c_plus, c_minus


def newton_constant(n):
    """c_n = 1 / ((n - 2) |S^{n-1}|), so that -c_n |x|^{2-n} is the Laplacian's fundamental solution."""
    if n < 3:
        raise ValueError("dimension must be >= 3")
    area = 2.0 * math.pi ** (0.5 * n) / math.gamma(0.5 * n)
    return 1.0 / ((n - 2) * area)


@dataclass(frozen=True)
class FracParams:
    """Dimension, order and the two normalization constants (filled in when omitted)."""

    n: int = 3
    s: float = 0.2
    c_ns: Optional[float] = None
    c_n_minus_s: Optional[float] = None

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("dimension must be >= 3")
        c_plus, c_minus = normalization_constant(self.n, self.s)
        if self.c_ns is None:
            object.__setattr__(self, "c_ns", c_plus)
        if self.c_n_minus_s is None:
            object.__setattr__(self, "c_n_minus_s", c_minus)
        if self.c_ns <= 0 or self.c_n_minus_s <= 0:
            raise ValueError("normalization constants must be positive")


def fundamental_solution(params: FracParams, x):
    """Phi_s(x) = c_{n,-s} |x|^{2s-n}."""
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    if r == 0.0:
        raise ValueError("the fundamental solution is singular at the origin")
    return params.c_n_minus_s * r ** (2.0 * params.s - params.n)


# quadrature specification ---------------------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    """Resolution and truncation parameters of the singular-integral engine.

    Parameters
    ----------
    near_radius
        Half-width of the symmetrized zone around the evaluation point.
        ``None`` selects min(1, |x|/4) (and 1 at the origin). On the radial
        path the value is capped at |x|/2.
    mid_nodes
        Gauss-Legendre order used on every panel (near, mid and tail). The
        error estimate of each zone is its change against half this order.
    tail_radius
        Truncation radius; ``None`` selects max(8 |x|, 32).
    tail_model
        ``"power_law"`` integrates the DecayProfile model beyond the tail
        radius, ``"none"`` drops the tail.
    angular_nodes
        Gauss nodes in the polar cosine for the brute-force path; the azimuth
        uses twice as many uniform nodes.
    t_nodes
        Gauss nodes for the coefficient integral over t in [0, 1].
    """

    near_radius: Optional[float] = None
    mid_nodes: int = 24
    tail_radius: Optional[float] = None
    tail_model: str = "power_law"
    angular_nodes: int = 16
    t_nodes: int = 16

    def __post_init__(self):
        if self.mid_nodes < 16:
            raise ValueError("mid_nodes must be >= 16")
        if self.tail_model not in TAIL_MODELS:
            raise ValueError(f"unknown tail model {self.tail_model!r}")
        if self.near_radius is not None and self.near_radius <= 0:
            raise ValueError("near_radius must be positive")
        if self.near_radius is not None and self.tail_radius is not None and self.near_radius >= self.tail_radius:
            raise ValueError("near_radius must be smaller than tail_radius")
        if self.angular_nodes < 4:
            raise ValueError("angular_nodes must be >= 4")
        if self.t_nodes < 8:
            raise ValueError("t_nodes must be >= 8")

    def near_for(self, a):
        if self.near_radius is None:
            return min(1.0, a / 4.0) if a > 0 else 1.0
        return self.near_radius

    def tail_for(self, a):
        R = max(8.0 * a, 32.0) if self.tail_radius is None else float(self.tail_radius)
        if self.tail_model == "none" and R < 4.0 * a:
            raise ValueError("tail_model='none' needs tail_radius >= 4 |x|")
        return R

    def refined(self, factor=2):
        d = asdict(self)
        d["mid_nodes"] = int(self.mid_nodes * factor)
        return QuadratureSpec(**d)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown quadrature keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


DEFAULT_QUAD = QuadratureSpec()


# region split ---------------------------------------------------------------


@dataclass(frozen=True)
class RegionSplit:
    """The four regions A1, A2, A3+, A3- attached to a point x."""

    x: tuple

    def indicators(self, y):
        """Boolean array of shape (..., 4) with columns a1, a2, a3_plus, a3_minus."""
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(y, dtype=float)
        half = 0.5 * np.linalg.norm(x)
        ry = np.linalg.norm(y, axis=-1)
        rxy = np.linalg.norm(y - x, axis=-1)
        a1 = ry <= half
        a2 = (rxy <= half) & ~a1
        a3 = ~(a1 | a2)
        a3p = a3 & (rxy >= ry)
        a3m = a3 & ~a3p
        return np.stack([a1, a2, a3p, a3m], axis=-1)

    def a1(self, y):
        return self.indicators(y)[..., 0]

    def a2(self, y):
        return self.indicators(y)[..., 1]

    def a3_plus(self, y):
        return self.indicators(y)[..., 2]

    def a3_minus(self, y):
        return self.indicators(y)[..., 3]


# results --------------------------------------------------------------------


@dataclass
class OpResult:
    """An operator value with per-zone contributions and error estimates."""

    value: float
    near: float
    mid: float
    tail: float
    err_near: float
    err_mid: float
    err_tail: float
    scale: float
    x: tuple = ()

    @property
    def error(self):
        return self.err_near + self.err_mid + self.err_tail

    def scaled(self, c):
        return OpResult(
            c * self.value, c * self.near, c * self.mid, c * self.tail,
            abs(c) * self.err_near, abs(c) * self.err_mid, abs(c) * self.err_tail,
            abs(c) * self.scale, self.x,
        )

    def __add__(self, other):
        return OpResult(
            self.value + other.value, self.near + other.near, self.mid + other.mid,
            self.tail + other.tail, self.err_near + other.err_near,
            self.err_mid + other.err_mid, self.err_tail + other.err_tail,
            self.scale + other.scale, self.x,
        )

    def csv_row(self):
        return [*map(float, self.x), self.value, self.err_near, self.err_mid, self.err_tail]


def write_diagnostics_csv(results, path):
    """Write rows (x..., value, err_near, err_mid, err_tail) for a list of OpResult."""
    results = list(results)
    dim = len(results[0].x) if results else 1
    head = ["r"] if dim == 1 else [f"x{i}" for i in range(dim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head + ["value", "err_near", "err_mid", "err_tail"])
        for res in results:
            w.writerow([repr(float(v)) for v in res.csv_row()])


# integrand descriptions -----------------------------------------------------


@dataclass
class _Tail:
    """Model of an integrand beyond the tail radius R.

    ``terms`` and ``alt_terms`` are lists of (coef_A, coef_B, t): the radial
    numerators are sum_j coef (b / R)^t_j. On the brute-force path the
    coefficients may be callables of the unit direction.
    """

    terms: list
    alt_terms: list

    @property
    def lead(self):
        live = [t for cA, cB, t in self.terms if _nonzero(cA) or _nonzero(cB)]
        return max(live) if live else None


def _nonzero(c):
    if callable(c):
        return True
    return c != 0.0


def _check_2d(n):
    if n != 3:
        raise NotImplementedError("the singular-integral engine is implemented for n = 3")


def _radius(x, n=3):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return float(arr), np.array([float(arr)] + [0.0] * (n - 1))
    if arr.shape[-1] != n:
        raise ValueError(f"dimension mismatch: expected a point in R^{n}")
    return float(np.linalg.norm(arr)), arr


def _offset(u):
    """r -> u(r) - L, using the cancellation-free deviation when L = 1."""
    L = u.far_level
    if L == 1.0:
        return u.deviation
    return lambda r: u.radial(r) - L


def _field_tail(u, R, t_alt=None):
    """Anchor value u(R) - L, declared exponent, and a locally measured exponent."""
    if u.decay is None:
        raise ValueError(f"{u!r} has no DecayProfile; needed for the power-law tail")
    L = u.far_level
    t = u.decay.tail_exponent
    g = _offset(u)
    d_R = float(g(np.array([R]))[0])
    d_h = float(g(np.array([0.5 * R]))[0])
    if d_R != 0.0 and d_h != 0.0 and d_R * d_h > 0:
        t_loc = math.log(abs(d_R / d_h)) / math.log(2.0)
    else:
        t_loc = t
    return L, d_R, t, t_loc


# radial engine --------------------------------------------------------------


def _kernel_sum(a, b, w, A, B, p):
    if b.size == 0:
        return 0.0, 0.0
    Av = A(b)
    Bv = np.zeros_like(b) if B is None else B(b)
    val = kernels.radial_kernel_sum(a, b, w, Av, Bv, p)
    scale = kernels.radial_kernel_sum(a, b, w, np.abs(Av), np.abs(Bv), p)
    return val, scale


def _tail_numerators(terms, R):
    def fa(b):
        out = np.zeros_like(b)
        for cA, _, t in terms:
            if cA != 0.0:
                out += cA * (b / R) ** t
        return out

    def fb(b):
        out = np.zeros_like(b)
        for _, cB, t in terms:
            if cB != 0.0:
                out += cB * (b / R) ** t
        return out

    return fa, fb


def _radial_engine(a, p, A, B, tail: Optional[_Tail], quad: QuadratureSpec, near_power, R, kinks=()):
    """Integrate [A(b) G0(a,b,p) + B(b) D2(a,b,p)] b^2 over b in (0, inf)."""
    if a < ORIGIN_SNAP:
        a = 0.0
    delta = quad.near_for(a)
    if a > 0:
        delta = min(delta, 0.5 * a)
    if R <= a + 2.0 * delta:
        raise ValueError(f"tail radius {R} too small for evaluation radius {a}")

    def pair(h, w):
        if a == 0.0:
            return h, w
        # offsets are snapped so that a + h and a - h are exact mirror images
        h = (a + h) - a
        return np.concatenate([a + h, a - h]), np.concatenate([w, w])

    h_c = delta * 2.0**-NEAR_LEVELS
    g_c, sc_c = _kernel_sum(a, *pair(np.array([h_c]), np.array([1.0])), A, B, p)
    g_h, _ = _kernel_sum(a, *pair(np.array([0.5 * h_c]), np.array([1.0])), A, B, p)
    inner = inner_power_law(g_c, g_h, h_c, near_power)

    def near(order):
        return pair(*graded_rule(delta, order, NEAR_LEVELS))

    pts = [dyadic_breaks(0.0, R, base=1.0, min_level=-3), np.asarray(kinks, dtype=float)]
    if a > 0:
        k = np.arange(1, 64)
        steps = delta * 2.0**k
        steps = steps[steps < max(a, R)]
        pts += [a + steps, a - steps]
        lo_end, hi_start = a - delta, a + delta
    else:
        lo_end, hi_start = None, delta
    pts = np.concatenate(pts)

    def mid(order):
        bs, ws = [], []
        if lo_end is not None:
            inner = pts[(pts > 0.0) & (pts < lo_end)]
            b, w = panel_rule(merge_breaks(np.concatenate([[0.0, lo_end], inner])), order)
            bs.append(b)
            ws.append(w)
        inner = pts[(pts > hi_start) & (pts < R)]
        b, w = panel_rule(merge_breaks(np.concatenate([[hi_start, R], inner])), order)
        bs.append(b)
        ws.append(w)
        return np.concatenate(bs), np.concatenate(ws)

    N = quad.mid_nodes
    half = N // 2
    vals = {}
    for name, rule in (("near", near), ("mid", mid)):
        b, w = rule(N)
        v, sc = _kernel_sum(a, b, w, A, B, p)
        b2, w2 = rule(half)
        v2, _ = _kernel_sum(a, b2, w2, A, B, p)
        vals[name] = (v, abs(v - v2), sc)
    v, e, sc = vals["near"]
    # the closure is exact to relative order h_c^2; its size bounds the error
    vals["near"] = (v + inner, e + abs(inner) * h_c, sc + abs(sc_c) * h_c)

    tail_val = tail_err = tail_scale = 0.0
    if tail is not None and tail.lead is not None:
        gamma = p - 3.0 - tail.lead
        if gamma <= 0:
            raise ValueError("tail integrand is not integrable for the declared decay")
        kappa = 1.0 / gamma
        fa, fb = _tail_numerators(tail.terms, R)
        b, w = tail_rule(R, kappa, N)
        tail_val, tail_scale = _kernel_sum(a, b, w, fa, fb, p)
        b2, w2 = tail_rule(R, kappa, half)
        v2, _ = _kernel_sum(a, b2, w2, fa, fb, p)
        ga, gb = _tail_numerators(tail.alt_terms, R)
        alt_lead = max(t for _, _, t in tail.alt_terms)
        if p - 3.0 - alt_lead > 0:
            kappa_alt = 1.0 / (p - 3.0 - alt_lead)
            b3, w3 = tail_rule(R, kappa_alt, N)
            v3, _ = _kernel_sum(a, b3, w3, ga, gb, p)
            model_err = abs(v3 - tail_val)
        else:
            model_err = abs(tail_val)
        tail_err = abs(tail_val - v2) + model_err

    return OpResult(
        value=vals["near"][0] + vals["mid"][0] + tail_val,
        near=vals["near"][0],
        mid=vals["mid"][0],
        tail=tail_val,
        err_near=vals["near"][1],
        err_mid=vals["mid"][1],
        err_tail=tail_err,
        scale=vals["near"][2] + vals["mid"][2] + tail_scale,
        x=(a,),
    )


def _radial_R(a, quad, *fields_):
    R = quad.tail_for(a)
    dom = min(f.domain_max for f in fields_)
    if R > dom:
        R = dom
        if R < 2.0 * a or R <= a + 1.0:
            raise ValueError(f"field table ends at {dom}, too close to the evaluation radius {a}")
    return R


def _all_kinks(*fields_):
    ks = set()
    for f in fields_:
        ks |= set(f.kinks)
    return tuple(sorted(ks))


def _fraclap_tail(u, d_a, R, quad, p):
    if quad.tail_model == "none":
        return None
    L, dR, t, t_loc = _field_tail(u, R)
    if t >= p - 3.0:
        raise ValueError(
            f"field grows like r^{t:g}; the operator needs growth below r^{p - 3.0:g} (finite L_s norm)"
        )
    return _Tail(
        terms=[(d_a, 0.0, 0.0), (-dR, 0.0, t)],
        alt_terms=[(d_a, 0.0, 0.0), (-dR, 0.0, min(t_loc, 0.5 * (t + p - 3.0)))],
    )


def _require_radial(*fields_):
    for f in fields_:
        if not f.is_radial:
            raise ValueError("the radial path needs radial fields")
        _check_2d(f.n)


def frac_laplacian_radial(u, params: FracParams, r, quad: QuadratureSpec = DEFAULT_QUAD, diagnostic=False):
    """(-Delta)^s u at radius r for a radial field in R^3.

    Uses the closed-form sphere average of |x - y|^{-3-2s}; the ring b = r is
    handled by the symmetrized near zone.
    """
    _require_radial(u)
    _check_2d(params.n)
    a = float(r)
    if a < 0:
        raise ValueError("radius must be non-negative")
    p = params.n + 2.0 * params.s
    R = _radial_R(a, quad, u)
    g = _offset(u)
    ga = float(g(np.array([a]))[0])
    res = _radial_engine(
        a, p,
        lambda b: ga - g(b), None,
        _fraclap_tail(u, ga, R, quad, p),
        quad, 1.0 - 2.0 * params.s, R, _all_kinks(u),
    ).scaled(params.c_ns)
    return res if diagnostic else res.value


def riesz_potential_radial(F, params: FracParams, r, quad: QuadratureSpec = DEFAULT_QUAD, diagnostic=False):
    """(-Delta)^{-s} F at radius r for a radial F in R^3."""
    _require_radial(F)
    _check_2d(params.n)
    a = float(r)
    p = params.n - 2.0 * params.s
    R = _radial_R(a, quad, F)
    tail = None
    if quad.tail_model == "power_law":
        L, dR, t, t_loc = _field_tail(F, R)
        if L != 0.0:
            raise ValueError("the Riesz potential needs a field decaying to zero")
        if -t <= 2.0 * params.s:
            raise ValueError(f"decay exponent {-t:g} must exceed 2s = {2 * params.s:g}")
        t_loc = min(t_loc, 0.5 * (t - 2.0 * params.s))
        tail = _Tail(terms=[(dR, 0.0, t)], alt_terms=[(dR, 0.0, t_loc)])
    res = _radial_engine(
        a, p, lambda b: F.radial(b), None, tail, quad, 2.0 * params.s - 1.0, R, _all_kinks(F)
    ).scaled(params.c_n_minus_s)
    return res if diagnostic else res.value


def _bilinear_tail(u1, u2, d1, d2, R, quad, p):
    if quad.tail_model == "none":
        return None
    L1, d1R, t1, s1 = _field_tail(u1, R)
    L2, d2R, t2, s2 = _field_tail(u2, R)

    def expand(e1, e2):
        return [(d1 * d2, 0.0, 0.0), (-d1 * d2R, 0.0, e2), (-d1R * d2, 0.0, e1), (d1R * d2R, 0.0, e1 + e2)]

    terms = expand(t1, t2)
    live = [t for c, _, t in terms if c != 0.0]
    if live and max(live) >= p - 3.0:
        raise ValueError("product of the two tails is not integrable against the kernel")
    cap = 0.5 * (max(live) + p - 3.0) if live else 0.0
    alt = expand(min(s1, cap), min(s2, cap))
    return _Tail(terms=terms, alt_terms=alt)


def bilinear_remainder_radial(u1, u2, params: FracParams, r, quad: QuadratureSpec = DEFAULT_QUAD, diagnostic=False):
    """int (u1(x)-u1(y))(u2(x)-u2(y)) |x-y|^{-3-2s} dy for radial fields (no constant)."""
    _require_radial(u1, u2)
    _check_2d(params.n)
    a = float(r)
    p = params.n + 2.0 * params.s
    R = _radial_R(a, quad, u1, u2)
    g1, g2 = _offset(u1), _offset(u2)
    x1 = float(g1(np.array([a]))[0])
    x2 = float(g2(np.array([a]))[0])
    res = _radial_engine(
        a, p,
        lambda b: (x1 - g1(b)) * (x2 - g2(b)), None,
        _bilinear_tail(u1, u2, x1, x2, R, quad, p),
        quad, 1.0 - 2.0 * params.s, R, _all_kinks(u1, u2),
    )
    return res if diagnostic else res.value


def radial_operator(a, p, A, B, tail_terms, alt_terms, quad: QuadratureSpec, near_power, R, kinks=()):
    """General radial integral int [A G0 + B D2] b^2 db with a power-law tail.

    ``tail_terms``/``alt_terms`` are lists of (coef_A, coef_B, t) describing
    the numerators beyond R as sums of (b / R)^t; pass ``None`` to truncate.
    Returns an unscaled ``OpResult``.
    """
    tail = None if tail_terms is None else _Tail(list(tail_terms), list(alt_terms))
    return _radial_engine(float(a), p, A, B, tail, quad, near_power, R, kinks)


# brute-force engine (R^3) ---------------------------------------------------


def _frame(x):
    a = float(np.linalg.norm(x))
    if a == 0.0:
        return a, np.eye(3)
    e0 = x / a
    helper = np.eye(3)[int(np.argmin(np.abs(e0)))]
    e1 = helper - np.dot(helper, e0) * e0
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e0, e1)
    return a, np.stack([e0, e1, e2])


def _sphere_grid(M):
    """Symmetric product grid on S^2: Gauss in cos(theta), 2M uniform azimuths."""
    ct, wt = gauss_legendre(M)
    K = 2 * M
    phi = 2.0 * np.pi * (np.arange(K) + 0.5) / K
    st = np.sqrt(1.0 - ct * ct)
    dirs = np.stack(
        [
            np.repeat(ct, K),
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
        ],
        axis=-1,
    )
    w = np.repeat(wt, K) * (2.0 * np.pi / K)
    return dirs, w


def _shell_sum(x, frame, rho, wr, p, N, M):
    """sum_k wr_k rho_k^{2-p} sum_dir w_dir N(x + rho_k dir) on product grids."""
    if rho.size == 0:
        return 0.0, 0.0
    dirs, wd = _sphere_grid(M)
    world = dirs @ frame
    y = x[None, None, :] + rho[:, None, None] * world[None, :, :]
    vals = N(y) * wd[None, :]
    radial_w = wr * rho ** (2.0 - p)
    return float(np.sum(vals.sum(axis=1) * radial_w)), float(np.sum(np.abs(vals).sum(axis=1) * radial_w))


def _ring_sum(x, a, frame, rho, wr, p, N, order, K, kinks):
    """Mid-zone shells |y - x| = rho parametrised by r = |y| and the azimuth."""
    total = 0.0
    scale = 0.0
    phi = 2.0 * np.pi * (np.arange(K) + 0.5) / K
    cphi, sphi = np.cos(phi), np.sin(phi)
    base_pts = np.concatenate([2.0 ** np.arange(-3, 40), np.asarray(kinks, dtype=float)])
    for rk, wk in zip(rho, wr):
        lo, hi = abs(a - rk), a + rk
        inner = base_pts[(base_pts > lo) & (base_pts < hi)]
        r, w = panel_rule(merge_breaks(np.concatenate([[lo, hi], inner])), order)
        c = np.clip((r * r - a * a - rk * rk) / (2.0 * a * rk), -1.0, 1.0)
        sc = np.sqrt(1.0 - c * c)
        loc = np.stack(
            [
                np.repeat(c, K),
                np.outer(sc, cphi).ravel(),
                np.outer(sc, sphi).ravel(),
            ],
            axis=-1,
        )
        y = x[None, :] + rk * (loc @ frame)
        vals = N(y).reshape(r.size, K)
        jac = w * r / (a * rk) * (2.0 * np.pi / K)
        f = wk * rk ** (2.0 - p)
        total += f * float(np.sum(vals.sum(axis=1) * jac))
        scale += f * float(np.sum(np.abs(vals).sum(axis=1) * jac))
    return total, scale


def _brute_engine(x, p, N, tail_N, alt_N, lead, quad: QuadratureSpec, near_power, R, kinks=()):
    """Integrate N(y) |x - y|^{-p} over R^3 by polar quadrature about x."""
    a, frame = _frame(x)
    # below ORIGIN_SNAP the ring parametrisation degenerates; shells about x are exact there
    centred = a < ORIGIN_SNAP
    delta = quad.near_for(0.0 if centred else a)
    if R <= a + 2.0 * delta:
        raise ValueError("tail radius too small")
    Nq, M = quad.mid_nodes, quad.angular_nodes
    h_c = delta * 2.0**-NEAR_LEVELS
    g_c, sc_c = _shell_sum(x, frame, np.array([h_c]), np.array([1.0]), p, N, M)
    g_h, _ = _shell_sum(x, frame, np.array([0.5 * h_c]), np.array([1.0]), p, N, M)
    inner = inner_power_law(g_c, g_h, h_c, near_power)

    def near(order, m):
        h, w = graded_rule(delta, order, NEAR_LEVELS)
        v, sc = _shell_sum(x, frame, h, w, p, N, m)
        return v + inner, sc + abs(sc_c) * h_c

    pts = [dyadic_breaks(0.0, R, base=1.0, min_level=-3), delta * 2.0 ** np.arange(1, 64)]
    if not centred:
        lv = 2.0 ** np.arange(-3, 40)
        pts += [a + lv, a - lv]
        ks = np.asarray(kinks, dtype=float)
        pts += [np.abs(a - ks), a + ks]
    pts = np.concatenate(pts)
    breaks = merge_breaks(np.concatenate([[delta, R], pts[(pts > delta) & (pts < R)]]))

    def mid(order, m):
        rho, w = panel_rule(breaks, order)
        if centred:
            return _shell_sum(x, frame, rho, w, p, N, m)
        return _ring_sum(x, a, frame, rho, w, p, N, order, 2 * m, kinks)

    zones = {}
    for name, fn in (("near", near), ("mid", mid)):
        v, sc = fn(Nq, M)
        v2, _ = fn(Nq // 2, M // 2 + (M // 2) % 2)
        zones[name] = (v, abs(v - v2), sc)

    tail_val = tail_err = tail_sc = 0.0
    if tail_N is not None and lead is not None:
        gamma = p - 3.0 - lead
        if gamma <= 0:
            raise ValueError("tail integrand is not integrable for the declared decay")
        kappa = 1.0 / gamma
        rho, w = tail_rule(R, kappa, Nq)
        tail_val, tail_sc = _shell_sum(x, frame, rho, w, p, tail_N, M)
        rho2, w2 = tail_rule(R, kappa, Nq // 2)
        v2, _ = _shell_sum(x, frame, rho2, w2, p, tail_N, M)
        v3, _ = _shell_sum(x, frame, rho, w, p, alt_N, M)
        tail_err = abs(tail_val - v2) + abs(v3 - tail_val)

    return OpResult(
        value=zones["near"][0] + zones["mid"][0] + tail_val,
        near=zones["near"][0],
        mid=zones["mid"][0],
        tail=tail_val,
        err_near=zones["near"][1],
        err_mid=zones["mid"][1],
        err_tail=tail_err,
        scale=zones["near"][2] + zones["mid"][2] + tail_sc,
        x=tuple(map(float, x)),
    )


def _direction_model(u, R_m, t):
    """y -> (u(R_m yhat) - L) (|y| / R_m)^t, the direction-dependent tail model."""
    L = u.far_level

    def m(y):
        ry = np.linalg.norm(y, axis=-1, keepdims=True)
        anchor = u(R_m * y / ry) - L
        return anchor * (ry[..., 0] / R_m) ** t

    return m


def _brute_field_tail(u, R_m):
    if u.decay is None:
        raise ValueError(f"{u!r} has no DecayProfile; needed for the power-law tail")
    t = u.decay.tail_exponent
    ray = np.array([1.0, 2.0, 3.0]) / math.sqrt(14.0)
    L = u.far_level
    d_R = float(u(R_m * ray) - L)
    d_h = float(u(0.5 * R_m * ray) - L)
    t_loc = math.log(abs(d_R / d_h)) / math.log(2.0) if d_R * d_h > 0 else t
    return t, t_loc


def _brute_R(a, quad, *fields_):
    R = quad.tail_for(a)
    if any(f.domain_max < R + a for f in fields_):
        raise ValueError("field table does not cover the brute-force domain")
    return R


def frac_laplacian_brute(u, params: FracParams, x, quad: QuadratureSpec = DEFAULT_QUAD, diagnostic=False):
    """(-Delta)^s u(x) by direct polar quadrature in R^3 (any field)."""
    _check_2d(params.n)
    _check_2d(u.n)
    a, x = _radius(x, 3)
    p = 3.0 + 2.0 * params.s
    R = _brute_R(a, quad, u)
    ux = float(u(x))
    tail_N = alt_N = lead = None
    if quad.tail_model == "power_law":
        R_m = R - a
        t, t_loc = _brute_field_tail(u, R_m)
        if t >= 2.0 * params.s:
            raise ValueError("field grows too fast for the fractional Laplacian")
        L = u.far_level
        m, m_alt = _direction_model(u, R_m, t), _direction_model(u, R_m, min(t_loc, 0.5 * (t + 2 * params.s)))
        tail_N = lambda y: (ux - L) - m(y)
        alt_N = lambda y: (ux - L) - m_alt(y)
        lead = max(0.0, t) if ux != L else t
    res = _brute_engine(
        x, p, lambda y: ux - u(y), tail_N, alt_N, lead, quad, 1.0 - 2.0 * params.s, R, _all_kinks(u)
    ).scaled(params.c_ns)
    return res if diagnostic else res.value


def riesz_potential_brute(F, params: FracParams, x, quad: QuadratureSpec = DEFAULT_QUAD, diagnostic=False):
    """(-Delta)^{-s} F(x) by direct polar quadrature in R^3."""
    _check_2d(params.n)
    a, x = _radius(x, 3)
    p = 3.0 - 2.0 * params.s
    R = _brute_R(a, quad, F)
    tail_N = alt_N = lead = None
    if quad.tail_model == "power_law":
        R_m = R - a
        t, t_loc = _brute_field_tail(F, R_m)
        if F.far_level != 0.0 or -t <= 2.0 * params.s:
            raise ValueError("the Riesz potential needs decay faster than r^{-2s}")
        tail_N = _direction_model(F, R_m, t)
        alt_N = _direction_model(F, R_m, min(t_loc, 0.5 * (t - 2 * params.s)))
        lead = t
    res = _brute_engine(
        x, p, lambda y: F(y), tail_N, alt_N, lead, quad, 2.0 * params.s - 1.0, R, _all_kinks(F)
    ).scaled(params.c_n_minus_s)
    return res if diagnostic else res.value


def bilinear_remainder_brute(u1, u2, params: FracParams, x, quad: QuadratureSpec = DEFAULT_QUAD, diagnostic=False):
    """Bilinear remainder integral by direct polar quadrature in R^3."""
    _check_2d(params.n)
    a, x = _radius(x, 3)
    p = 3.0 + 2.0 * params.s
    R = _brute_R(a, quad, u1, u2)
    v1, v2 = float(u1(x)), float(u2(x))
    tail_N = alt_N = lead = None
    if quad.tail_model == "power_law":
        R_m = R - a
        t1, l1 = _brute_field_tail(u1, R_m)
        t2, l2 = _brute_field_tail(u2, R_m)
        L1, L2 = u1.far_level, u2.far_level
        m1, m2 = _direction_model(u1, R_m, t1), _direction_model(u2, R_m, t2)
        n1, n2 = _direction_model(u1, R_m, min(l1, t1 + 0.5)), _direction_model(u2, R_m, min(l2, t2 + 0.5))
        tail_N = lambda y: (v1 - L1 - m1(y)) * (v2 - L2 - m2(y))
        alt_N = lambda y: (v1 - L1 - n1(y)) * (v2 - L2 - n2(y))
        lead = max(0.0, t1, t2, t1 + t2)
        if lead >= 2.0 * params.s:
            raise ValueError("product of the two tails is not integrable against the kernel")
    res = _brute_engine(
        x, p, lambda y: (v1 - u1(y)) * (v2 - u2(y)), tail_N, alt_N, lead, quad,
        1.0 - 2.0 * params.s, R, _all_kinks(u1, u2),
    )
    return res if diagnostic else res.value


# public operators -----------------------------------------------------------


def _use_radial(method, *fields_):
    if method == "radial":
        return True
    if method == "brute":
        return False
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    return all(f.is_radial for f in fields_)


def frac_laplacian(u, params: FracParams, x, quad: QuadratureSpec = DEFAULT_QUAD, method="auto", diagnostic=False):
    """Principal-value fractional Laplacian (-Delta)^s u(x).

    Parameters
    ----------
    u : Field
        Field with a DecayProfile (unless ``quad.tail_model == "none"``).
    params : FracParams
    x : point or float
        Evaluation point; a float is read as a point on the first axis.
    method : {"auto", "radial", "brute"}
        ``auto`` uses the radial reduction for radial fields.
    diagnostic : bool
        Return an ``OpResult`` with per-zone values and error estimates.
    """
    a, pt = _radius(x, params.n)
    if _use_radial(method, u):
        return frac_laplacian_radial(u, params, a, quad, diagnostic)
    return frac_laplacian_brute(u, params, pt, quad, diagnostic)


def riesz_potential(F, params: FracParams, x, quad: QuadratureSpec = DEFAULT_QUAD, method="auto", diagnostic=False):
    """Riesz potential (-Delta)^{-s} F(x) = c_{n,-s} int F(y) |x-y|^{2s-n} dy."""
    a, pt = _radius(x, params.n)
    if _use_radial(method, F):
        return riesz_potential_radial(F, params, a, quad, diagnostic)
    return riesz_potential_brute(F, params, pt, quad, diagnostic)


def _check_bilinear_orders(u1, u2, params):
    al = [u.decay.alpha for u in (u1, u2) if u.decay is not None]
    if al and params.s >= 0.5 * min(al):
        raise ValueError(f"s = {params.s} is too large for the declared Hoelder orders {al}")


def bilinear_remainder(u1, u2, params: FracParams, x, quad: QuadratureSpec = DEFAULT_QUAD, method="auto", diagnostic=False):
    """I(x) = int (u1(x)-u1(y)) (u2(x)-u2(y)) / |x-y|^{n+2s} dy (without c_{n,s})."""
    _check_bilinear_orders(u1, u2, params)
    a, pt = _radius(x, params.n)
    if _use_radial(method, u1, u2):
        return bilinear_remainder_radial(u1, u2, params, a, quad, diagnostic)
    return bilinear_remainder_brute(u1, u2, params, pt, quad, diagnostic)


def product_rule_residual(u1, u2, params: FracParams, x, quad: QuadratureSpec = DEFAULT_QUAD, method="auto", diagnostic=False):
    """(-D)^s(u1 u2) - u1 (-D)^s u2 - u2 (-D)^s u1 + c_{n,s} I(x).

    With ``diagnostic=True`` returns (residual, combined error, magnitude of
    (-Delta)^s(u1 u2)).
    """
    _check_bilinear_orders(u1, u2, params)
    a, pt = _radius(x, params.n)
    prod = u1 * u2
    t12 = frac_laplacian(prod, params, pt, quad, method, diagnostic=True)
    t1 = frac_laplacian(u1, params, pt, quad, method, diagnostic=True)
    t2 = frac_laplacian(u2, params, pt, quad, method, diagnostic=True)
    bi = bilinear_remainder(u1, u2, params, pt, quad, method, diagnostic=True)
    v1, v2 = float(u1(pt)), float(u2(pt))
    res = t12.value - v1 * t2.value - v2 * t1.value + params.c_ns * bi.value
    err = t12.error + abs(v1) * t2.error + abs(v2) * t1.error + params.c_ns * bi.error
    if diagnostic:
        return res, err, abs(t12.value)
    return res


def ls_norm(u, params: FracParams, quad: QuadratureSpec = DEFAULT_QUAD):
    """||u||_{L_s} = int |u(y)| / (1 + |y|^{n+2s}) dy, or ``math.inf`` when divergent."""
    n, s = params.n, params.s
    lead = None
    if u.decay is not None:
        t = u.decay.tail_exponent if u.far_level == 0.0 else max(0.0, u.decay.tail_exponent)
        lead = t
        if t - 2.0 * s >= 0.0:
            return math.inf
    elif quad.tail_model == "power_law":
        raise ValueError("ls_norm needs a DecayProfile for the tail")
    area = 2.0 * math.pi ** (0.5 * n) / math.gamma(0.5 * n)
    R = min(quad.tail_for(1.0), u.domain_max)
    br = merge_breaks(np.concatenate([[0.0, R], dyadic_breaks(0.0, R, 1.0, -3), np.asarray(u.kinks, dtype=float)]))
    b, w = panel_rule(br, quad.mid_nodes)
    g = lambda r: np.abs(u.radial(r)) * r ** (n - 1) / (1.0 + r ** (n + 2 * s))
    total = float(np.sum(w * g(b)))
    if quad.tail_model == "power_law" and lead is not None:
        uR = float(np.abs(u.radial(np.array([R]))[0]))
        kappa = 1.0 / (2.0 * s - lead)
        bt, wt = tail_rule(R, kappa, quad.mid_nodes)
        total += float(np.sum(wt * uR * (bt / R) ** lead * bt ** (n - 1) / (1.0 + bt ** (n + 2 * s))))
    return area * total
