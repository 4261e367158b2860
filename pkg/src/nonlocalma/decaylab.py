"""Decay-exponent regression and bound checks for the non-local lemmas.

Every checker evaluates an operator on dyadic radii, fits the log-log slope
and compares it against the claimed exponent. A fit whose r^2 falls below
``R2_MIN`` is reported as inconclusive, never as a pass or a fail.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import fields as fl
from . import fracops as fo

DEFAULT_RADII = (8.0, 16.0, 32.0, 64.0, 128.0, 256.0)
DEFAULT_MARGIN = 0.1
STRICT_MARGIN = 0.05
R2_MIN = 0.95
# bounded log-corrected constant: max / min over the radius window
LOG_RATIO_MAX = 3.0
# largest relative RMS misfit of g r^p = K ln r + K0 accepted as conclusive
LOG_REL_RMS_MAX = 0.05

# lemma_id -> (short title, mathematical statement being checked)
LEMMA_INDEX = {
    "fraclap-decay": (
        "decay of the fractional Laplacian",
        "|(-Delta)^s u(x)| <= C1 |x|^(-min{sigma,n}-2s), with an extra ln|x| when sigma = n",
    ),
    "growth": (
        "fractional Laplacian of a slowly growing field",
        "|u| <= c'|x|^sigma with sigma in [0,2s) gives |(-Delta)^s u(x)| <= C1 |x|^(sigma-2s)",
    ),
    "riesz-decay": (
        "decay of the Riesz potential",
        "|(-Delta)^(-s) u(x)| <= C |x|^(2s-min{sigma,n}), with ln|x| when sigma = n",
    ),
    "bilinear-decay": (
        "decay of the bilinear remainder",
        "|I(x)| <= C |x|^(-min{sigma1+sigma2,n}-2s)",
    ),
    "holder-remainder": (
        "Hoelder regularity of the bilinear remainder",
        "I in C^(min{alpha1,alpha2}-2s) with norm <= C1 ||u1||_{C^alpha1} ||u2||_{C^alpha2}",
    ),
    "commutation": (
        "commuting (-Delta)^s with a partial derivative",
        "(-Delta)^s(d_k u) = d_k((-Delta)^s u) when 2s < alpha (C^{1,alpha}) or 2s < 1+alpha (C^{2,alpha})",
    ),
    "product-rule": (
        "fractional product rule",
        "(-Delta)^s(u1 u2) = u1 (-Delta)^s u2 + u2 (-Delta)^s u1 - c_{n,s} I(x)",
    ),
    "limit": (
        "limit at infinity from gradient decay",
        "|Du| <= C|x|^(-1-sigma) gives u0 with |u(x)-u0| <= C|x|^(-sigma)",
    ),
}


def _pmap(fn, items, threads=1):
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# fitting --------------------------------------------------------------------


@dataclass
class DecayFit:
    """Least-squares power-law fit of |g(r)|.

    ``status`` is ``"ok"``, ``"zero"`` (all values exactly zero) or
    ``"inconclusive"``. With ``log_corrected`` the signed values are fitted as
    g r^p = K ln r + K0; conclusiveness then rests on that fit, and
    C_r = |g| r^p / ln r stays below ``log_bound`` for all r beyond the window
    start.
    """

    exponent: float
    constant: float
    log_corrected: bool
    r_squared: float
    radii_used: list
    status: str = "ok"
    log_power: Optional[float] = None
    log_constants: Optional[list] = None
    log_ratio: Optional[float] = None
    log_fit: Optional[list] = None
    log_rel_rms: Optional[float] = None
    log_bound: Optional[float] = None

    @property
    def conclusive(self):
        return self.status in ("ok", "zero")

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = str(v)
        return d


def fit_decay_exponent(radii, values, log_model=False, p=None, noise=None):
    """Fit |values| ~ C r^exponent on the given radii.

    Parameters
    ----------
    radii, values : sequences of equal length (at least 4)
    log_model : bool
        Also fit C_r = |g| r^p / ln r with the borderline power ``p`` fixed.
    p : float
        Positive decay power for the log model (the fitted law is r^-p ln r).
    noise : float, optional
        Absolute quadrature error (scalar or per radius); any |value| at or
        below it makes the fit inconclusive.

    Examples
    --------
    >>> fit = fit_decay_exponent([8, 16, 32, 64], [8.0**-2, 16.0**-2, 32.0**-2, 64.0**-2])
    >>> round(fit.exponent, 9)
    -2.0
    """
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    if r.size < 4:
        raise ValueError("need at least 4 radii")
    if r.shape != v.shape:
        raise ValueError("radii and values differ in length")
    if np.any(np.diff(r) <= 0) or r[0] <= 0:
        raise ValueError("radii must be positive and strictly increasing")
    if log_model and p is None:
        raise ValueError("the log model needs the borderline power p")
    if np.all(v == 0.0):
        return DecayFit(-math.inf, 0.0, bool(log_model), 1.0, r.tolist(), "zero", p)
    av = np.abs(v)
    if np.any(av == 0.0) or (noise is not None and np.any(av <= np.asarray(noise, dtype=float))):
        return DecayFit(math.nan, math.nan, bool(log_model), 0.0, r.tolist(), "inconclusive", p)
    lr, lv = np.log(r), np.log(av)
    A = np.stack([lr, np.ones_like(lr)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, lv, rcond=None)
    resid = lv - (slope * lr + icpt)
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    fit = DecayFit(
        exponent=float(slope),
        constant=float(math.exp(icpt)),
        log_corrected=bool(log_model),
        r_squared=float(max(0.0, r2)),
        radii_used=r.tolist(),
        status="ok" if r2 >= R2_MIN else "inconclusive",
        log_power=p,
    )
    if log_model:
        if np.any(r <= 1.0):
            raise ValueError("log model needs radii > 1")
        # signed g r^p = K ln r + K0; a good linear fit means |g| <= C r^-p ln r
        y = v * r**p
        ln = np.log(r)
        (K, K0), *_ = np.linalg.lstsq(np.stack([ln, np.ones_like(ln)], axis=1), y, rcond=None)
        rel = float(np.sqrt(np.mean((y - K * ln - K0) ** 2)) / np.max(np.abs(y)))
        C = np.abs(y) / ln
        fit.log_constants = C.tolist()
        fit.log_ratio = float(C.max() / C.min())
        fit.log_fit = [float(K), float(K0)]
        fit.log_rel_rms = rel
        fit.log_bound = float(max(abs(K + K0 / ln[0]), abs(K)))
        fit.status = "ok" if rel <= LOG_REL_RMS_MAX else "inconclusive"
    return fit


@dataclass
class BoundCheck:
    """Comparison of a fitted exponent with a claimed decay exponent."""

    claimed_exponent: float
    fitted: DecayFit
    margin: float
    passed: bool
    lemma_id: str = ""
    radii: list = field(default_factory=list)
    values: list = field(default_factory=list)
    errors: Optional[list] = None

    @property
    def status(self):
        if self.fitted.status == "inconclusive":
            return "inconclusive"
        return "pass" if self.passed else "fail"

    def to_dict(self):
        return {
            "lemma_id": self.lemma_id,
            "claimed": self.claimed_exponent,
            "fitted": self.fitted.to_dict(),
            "margin": self.margin,
            "pass": self.passed,
            "status": self.status,
            "radii": list(map(float, self.radii)),
            "values": list(map(float, self.values)),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_rows(self):
        """Rows (r, |value|, bound) with bound = K r^claimed (times ln r for the log model).

        K is the smallest constant for which the curve dominates every sample.
        """
        r = np.asarray(self.radii, dtype=float)
        v = np.abs(np.asarray(self.values, dtype=float))
        shape = r**self.claimed_exponent
        if self.fitted.log_corrected:
            shape = shape * np.log(r)
        K = float(np.max(v / shape)) if v.size and np.any(v > 0) else 0.0
        return [(float(ri), float(vi), K * float(si)) for ri, vi, si in zip(r, v, shape)]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "value", "bound"])
            for row in self.csv_rows():
                w.writerow([repr(x) for x in row])


def bound_check(radii, values, claimed, margin=DEFAULT_MARGIN, log_model=False, lemma_id="", noise=None):
    """Fit the values and compare with ``claimed`` (a negative exponent for decay).

    For the log model a conclusive linear fit of g r^p in ln r is the pass
    condition, since it bounds |g| by C r^claimed ln r.
    """
    fit = fit_decay_exponent(radii, values, log_model=log_model, p=-claimed if log_model else None, noise=noise)
    if fit.status == "zero":
        ok = True
    elif fit.status == "inconclusive":
        ok = False
    elif log_model:
        ok = True
    else:
        ok = fit.exponent <= claimed + margin
    return BoundCheck(claimed, fit, margin, bool(ok), lemma_id, list(map(float, radii)), list(map(float, values)))


# lemma checkers -------------------------------------------------------------


def _radii(radii, *fields_):
    radii = [float(r) for r in (DEFAULT_RADII if radii is None else radii)]
    rp = max((f.decay.r_prime for f in fields_ if f.decay is not None), default=1.0)
    if any(r <= 2.0 * rp for r in radii):
        raise ValueError(f"all radii must exceed 2 R' = {2 * rp}")
    return radii


def _signed_sigma(u):
    """Decay exponent sigma > 0 for decaying fields, -growth for growing ones."""
    if u.decay is None:
        raise ValueError("field needs a DecayProfile")
    return -u.decay.tail_exponent


def _is_borderline(a, b):
    return abs(a - b) < 1e-12


def _eval_many(fn, radii, threads):
    res = _pmap(fn, radii, threads)
    return [r.value for r in res], [r.error for r in res]


def check_fraclap_decay(u, s, radii=None, margin=DEFAULT_MARGIN, quad=fo.DEFAULT_QUAD, threads=1):
    """Check |(-Delta)^s u| against r^-(min(sigma, n) + 2s), log-corrected at sigma = n."""
    if u.decay is None or u.decay.direction != "decay":
        raise ValueError("check_fraclap_decay needs a decaying field")
    if not 0.0 < s < 0.5 * u.decay.alpha:
        raise ValueError(f"hypothesis violated: need 0 < s < alpha/2 = {0.5 * u.decay.alpha}")
    radii = _radii(radii, u)
    P = fo.FracParams(u.n, s)
    sigma = u.decay.sigma
    claimed = -(min(sigma, u.n) + 2.0 * s)
    vals, errs = _eval_many(lambda r: fo.frac_laplacian(u, P, r, quad, diagnostic=True), radii, threads)
    chk = bound_check(radii, vals, claimed, margin, _is_borderline(sigma, u.n), "fraclap-decay", noise=errs)
    chk.errors = errs
    return chk


def check_growth_case(u, s, radii=None, margin=DEFAULT_MARGIN, quad=fo.DEFAULT_QUAD, threads=1):
    """Check |(-Delta)^s u| against r^(sigma - 2s) for growth sigma in [0, 2s)."""
    if u.decay is None:
        raise ValueError("field needs a DecayProfile")
    sigma = u.decay.sigma if u.decay.direction == "growth" else 0.0
    if not 0.0 < s < 0.5 * u.decay.alpha:
        raise ValueError(f"hypothesis violated: need 0 < s < alpha/2 = {0.5 * u.decay.alpha}")
    if not 0.0 <= sigma < 2.0 * s:
        raise ValueError(f"hypothesis violated: growth sigma = {sigma} must lie in [0, 2s = {2 * s})")
    radii = _radii(radii, u)
    P = fo.FracParams(u.n, s)
    vals, errs = _eval_many(lambda r: fo.frac_laplacian(u, P, r, quad, diagnostic=True), radii, threads)
    chk = bound_check(radii, vals, sigma - 2.0 * s, margin, False, "growth", noise=errs)
    chk.errors = errs
    return chk


def check_riesz_decay(u, s, radii=None, margin=DEFAULT_MARGIN, quad=fo.DEFAULT_QUAD, threads=1):
    """Check the Riesz potential against r^(2s - min(sigma, n)), log-corrected at sigma = n."""
    sigma = _signed_sigma(u)
    if sigma <= 2.0 * s:
        raise ValueError(f"hypothesis violated: sigma = {sigma} must exceed 2s = {2 * s}")
    radii = _radii(radii, u)
    P = fo.FracParams(u.n, s)
    claimed = 2.0 * s - min(sigma, u.n)
    vals, errs = _eval_many(lambda r: fo.riesz_potential(u, P, r, quad, diagnostic=True), radii, threads)
    chk = bound_check(radii, vals, claimed, margin, _is_borderline(sigma, u.n), "riesz-decay", noise=errs)
    chk.errors = errs
    return chk


def check_bilinear_decay(u1, u2, s, radii=None, margin=DEFAULT_MARGIN, quad=fo.DEFAULT_QUAD, threads=1):
    """Check I(x) against r^-(min(sigma1 + sigma2, n) + 2s), log-corrected on the borderline."""
    a1, a2 = (u.decay.alpha if u.decay else 0.9 for u in (u1, u2))
    if not 0.0 < s < 0.5 * (a1 + a2):
        raise ValueError("hypothesis violated: need 0 < s < (alpha1 + alpha2)/2")
    radii = _radii(radii, u1, u2)
    P = fo.FracParams(u1.n, s)
    sig = _signed_sigma(u1) + _signed_sigma(u2)
    claimed = -(min(sig, u1.n) + 2.0 * s)
    if u1.is_radial and u2.is_radial:
        op = lambda r: fo.bilinear_remainder_radial(u1, u2, P, r, quad, diagnostic=True)
    else:
        op = lambda r: fo.bilinear_remainder_brute(u1, u2, P, r, quad, diagnostic=True)
    vals, errs = _eval_many(op, radii, threads)
    chk = bound_check(radii, vals, claimed, margin, _is_borderline(sig, u1.n), "bilinear-decay", noise=errs)
    chk.errors = errs
    return chk


@dataclass
class HolderCheck:
    estimate: fl.HolderEstimate
    norm_product: float
    margin: float
    passed: bool
    lemma_id: str = "holder-remainder"

    def to_dict(self):
        return {
            "lemma_id": self.lemma_id,
            "estimate": self.estimate.to_dict(),
            "norm_product": self.norm_product,
            "margin": self.margin,
            "pass": self.passed,
            "status": "pass" if self.passed else "fail",
        }


def holder_norm(u, alpha, radius=64.0, pairs=4096, seed=fl.DEFAULT_SEED):
    """Sampled C^alpha norm sup|u| + [u]_alpha of a radial field over B_radius(0)."""
    r = np.linspace(0.0, radius, 2049)
    sup = float(np.max(np.abs(u.radial(r))))
    est = fl.holder_seminorm(u, alpha, np.zeros(u.n), radius, pairs=pairs, rng_seed=seed)
    return sup + est.seminorm


def check_holder_of_remainder(u1, u2, s, center=None, radius=10.0, pairs=256, seed=fl.DEFAULT_SEED,
                              margin=10.0, quad=fo.DEFAULT_QUAD, threads=1):
    """Sampled C^(min(alpha1, alpha2) - 2s) seminorm of I over a ball, against the norm product.

    Pair separations span [1e-3, 2 radius] (radius 10 by default gives [1e-3, 20]).
    """
    a1, a2 = (u.decay.alpha if u.decay else 0.9 for u in (u1, u2))
    if not 0.0 < s < 0.5 * min(a1, a2):
        raise ValueError("hypothesis violated: need 0 < s < min(alpha1, alpha2)/2")
    gamma = min(a1, a2) - 2.0 * s
    center = np.zeros(u1.n) if center is None else np.asarray(center, dtype=float)
    z1, z2, d = fl.sample_ball_pairs(center, radius, pairs, seed, d_min_rel=1e-3 / radius)
    P = fo.FracParams(u1.n, s)
    pts = np.concatenate([z1, z2])
    radial = u1.is_radial and u2.is_radial
    if radial:
        op = lambda x: fo.bilinear_remainder_radial(u1, u2, P, float(np.linalg.norm(x)), quad)
    else:
        op = lambda x: fo.bilinear_remainder_brute(u1, u2, P, x, quad)
    vals = np.asarray(_pmap(op, list(pts), threads))
    from . import kernels

    best, k = kernels.pair_ratio_max(vals[:pairs], vals[pairs:], d, gamma)
    est = fl.HolderEstimate(
        alpha=gamma,
        seminorm=best,
        region_center=tuple(map(float, center)),
        region_radius=float(radius),
        pair_count=int(pairs),
        seed=int(seed),
        worst_pair=(tuple(map(float, z1[k])), tuple(map(float, z2[k]))) if k >= 0 else None,
    )
    norms = holder_norm(u1, a1) * holder_norm(u2, a2)
    return HolderCheck(est, norms, margin, bool(best <= margin * norms))


@dataclass
class CommutationReport:
    max_abs: float
    max_rel: float
    tolerance: float
    passed: bool
    case: str
    h: float
    points: list
    lhs: list
    rhs: list
    lemma_id: str = "commutation"

    def to_dict(self):
        d = asdict(self)
        d["status"] = "pass" if self.passed else "fail"
        d["pass"] = d.pop("passed")
        return d


def check_commutation(u, s, k, points, h=1e-3, case="i", alpha=None, tolerance=1e-3, quad=fo.DEFAULT_QUAD, threads=1):
    """Compare (-Delta)^s (d_k u) with a central difference of (-Delta)^s u.

    ``case="i"`` requires 2s < alpha (u in C^{1,alpha}), ``case="ii"`` requires
    2s < 1 + alpha (u in C^{2,alpha}). Relative residuals are taken against the
    largest |d_k (-Delta)^s u| over the points.
    """
    alpha = (u.decay.alpha if u.decay else 0.9) if alpha is None else alpha
    if case == "i":
        ok = 2.0 * s < alpha
    elif case == "ii":
        ok = 2.0 * s < 1.0 + alpha
    else:
        raise ValueError(f"unknown case {case!r}")
    if not ok:
        raise ValueError(f"hypothesis ({case}) violated for s = {s}, alpha = {alpha}")
    if not u.is_radial:
        raise ValueError("check_commutation differentiates radial fields analytically")
    P = fo.FracParams(u.n, s)
    du = fl.PartialField(u, k)
    e = np.zeros(u.n)
    e[k] = h
    pts = [np.asarray(x, dtype=float) for x in points]

    def one(x):
        fd = (fo.frac_laplacian(u, P, x + e, quad) - fo.frac_laplacian(u, P, x - e, quad)) / (2.0 * h)
        return fd, fo.frac_laplacian(du, P, x, quad, method="brute")

    out = _pmap(one, pts, threads)
    lhs = [o[1] for o in out]
    rhs = [o[0] for o in out]
    diff = np.abs(np.asarray(lhs) - np.asarray(rhs))
    scale = max(np.max(np.abs(rhs)), 0.0)
    max_abs = float(diff.max())
    max_rel = float(max_abs / scale) if scale > 0 else (0.0 if max_abs == 0 else math.inf)
    return CommutationReport(
        max_abs, max_rel, tolerance, bool(max_rel <= tolerance), case, h,
        [list(map(float, x)) for x in pts], list(map(float, lhs)), list(map(float, rhs)),
    )


# limits ---------------------------------------------------------------------


@dataclass
class LimitFit:
    u0: float
    check: BoundCheck
    coefficients: list
    rms: float
    status: str

    def to_dict(self):
        return {"u0": self.u0, "check": self.check.to_dict(), "coefficients": self.coefficients,
                "rms": self.rms, "status": self.status}


def extract_limit(samples, sigma, margin=DEFAULT_MARGIN, step=1.0, terms=None):
    """Extrapolate u0 from samples (r, u(r)) under u = u0 + sum_j C_j r^-(sigma + j step).

    Returns ``(u0, LimitFit)``; ``LimitFit.check`` compares |u - u0| with r^-sigma.
    """
    samples = sorted((float(r), float(v)) for r, v in samples)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = np.array([a for a, _ in samples])
    v = np.array([b for _, b in samples])
    if np.unique(r).size < 6:
        raise ValueError("need at least 6 distinct radii")
    if np.ptp(v) == 0.0:
        u0 = float(v[0])
        chk = bound_check(np.unique(r), np.zeros(np.unique(r).size), -sigma, margin, lemma_id="limit")
        return u0, LimitFit(u0, chk, [], 0.0, "ok")
    J = min(3, np.unique(r).size - 3) if terms is None else int(terms)
    cols = [np.ones_like(r)] + [r ** -(sigma + j * step) for j in range(J)]
    A = np.stack(cols, axis=1)
    sc = np.abs(A).max(axis=0)
    coef, *_ = np.linalg.lstsq(A / sc, v, rcond=None)
    coef = coef / sc
    u0 = float(coef[0])
    rms = float(np.sqrt(np.mean((A @ coef - v) ** 2)))
    spread = float(np.ptp(v))
    status = "ok" if rms <= 1e-2 * spread else "inconclusive"
    ur = np.unique(r)
    dev = np.array([np.max(np.abs(v[r == x] - u0)) for x in ur])
    tiny = 1e-13 * max(1.0, abs(u0))
    if np.all(dev <= tiny):
        dev = np.zeros_like(dev)
    chk = bound_check(ur, dev, -sigma, margin, lemma_id="limit")
    if status == "inconclusive":
        chk.fitted.status = "inconclusive"
        chk.passed = False
    return u0, LimitFit(u0, chk, coef[1:].tolist(), rms, status)
