"""Scalar fields on R^n, Hoelder seminorm sampling and the hypothesis-(H) check.

Every field here is radial about the origin except ``PartialField``. Fields
carry an optional ``DecayProfile`` that describes ``u - far_level`` near
infinity; the integrators in ``fracops`` use it to model the truncated tail.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import ndtr

from . import kernels

KINDS = (
    "constant",
    "inverse_power",
    "growth_power",
    "exp_oscillation",
    "perturbed_one",
    "custom_radial_table",
)

DEFAULT_SEED = 20240601


@dataclass(frozen=True)
class DecayProfile:
    """Power-law envelope |u(x) - level| <= c_prime |x|^(-sigma) for |x| > r_prime.

    With ``direction="growth"`` the envelope reads c_prime |x|^sigma instead.
    """

    sigma: float
    alpha: float = 0.9
    c_prime: float = 1.0
    r_prime: float = 1.0
    direction: str = "decay"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.r_prime < 1.0:
            raise ValueError(f"r_prime must be >= 1, got {self.r_prime}")
        if self.c_prime <= 0.0:
            raise ValueError("c_prime must be positive")
        if self.direction not in ("decay", "growth"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.sigma < 0.0:
            raise ValueError("sigma must be non-negative")

    @property
    def tail_exponent(self) -> float:
        """Signed exponent t with |u - level| ~ r^t."""
        return -self.sigma if self.direction == "decay" else self.sigma

    @classmethod
    def from_tail_exponent(cls, t, **kw):
        if t <= 0:
            return cls(sigma=-t, direction="decay", **kw)
        return cls(sigma=t, direction="growth", **kw)

    def envelope(self, r):
        return self.c_prime * np.asarray(r, dtype=float) ** self.tail_exponent


class Field:
    """Base class: a scalar function on R^n evaluated on arrays of points."""

    n: int = 3
    decay: Optional[DecayProfile] = None
    far_level: float = 0.0
    is_radial: bool = True
    # radii where the profile is only piecewise smooth (quadrature breakpoints)
    kinks: tuple = ()
    # largest radius at which the field can be evaluated
    domain_max: float = math.inf

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"dimension mismatch: field has n={self.n}, points have {x.shape[-1]}")
        return self.radial(np.linalg.norm(x, axis=-1))

    def radial(self, r):
        raise NotImplementedError

    def deviation(self, r):
        """u(r) - 1, computed without cancellation where the closed form allows."""
        return self.radial(r) - 1.0

    def radial_derivative(self, r):
        raise NotImplementedError(f"{type(self).__name__} has no analytic derivative")

    def __mul__(self, other):
        if isinstance(other, Field):
            return ProductField(self, other)
        return ScaledField(self, float(other))

    __rmul__ = __mul__

    def __add__(self, other):
        return SumField(self, other)


@dataclass(frozen=True, eq=False)
class AnalyticField(Field):
    """Closed-form radial field; see the module-level constructors."""

    kind: str
    params: tuple = ()
    n: int = 3
    decay: Optional[DecayProfile] = None
    _table: Optional[PchipInterpolator] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.n < 3:
            raise ValueError("dimension must be >= 3")
        if self.kind == "custom_radial_table":
            r, v = (np.asarray(t, dtype=float) for t in self.params)
            if r.ndim != 1 or r.shape != v.shape or r.size < 4:
                raise ValueError("radial table needs matching 1-D arrays with >= 4 entries")
            if np.any(np.diff(r) <= 0) or r[0] < 0:
                raise ValueError("table radii must be non-negative and strictly increasing")
            # interpolating in r^2 keeps the profile even through the origin
            object.__setattr__(self, "_table", PchipInterpolator(r * r, v, extrapolate=False))

    @property
    def far_level(self):
        if self.kind == "constant":
            return float(self.params[0])
        if self.kind in ("perturbed_one", "exp_oscillation"):
            return 1.0
        return 0.0

    @property
    def domain_max(self):
        return self.table_range[1]

    @property
    def table_range(self):
        if self.kind != "custom_radial_table":
            return (0.0, math.inf)
        r = self.params[0]
        return (float(r[0]), float(r[-1]))

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        k, p = self.kind, self.params
        if k == "constant":
            return np.full_like(r, p[0])
        if k == "inverse_power":
            return p[1] * (1.0 + r * r) ** (-0.5 * p[0])
        if k == "growth_power":
            return p[1] * (1.0 + r * r) ** (0.5 * p[0])
        if k == "perturbed_one":
            return 1.0 + self.deviation(r)
        if k == "exp_oscillation":
            return 1.0 + self.deviation(r)
        lo, hi = self.table_range
        if np.any(r < lo * (1 - 1e-14)) or np.any(r > hi * (1 + 1e-14)):
            raise ValueError(f"radius outside table range [{lo}, {hi}]")
        return self._table(np.clip(r * r, lo * lo, hi * hi))

    def deviation(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "perturbed_one":
            kappa, beta = self.params
            return kappa * (1.0 + r * r) ** (-0.5 * beta)
        if self.kind == "exp_oscillation":
            with np.errstate(over="ignore", invalid="ignore"):
                out = np.exp(-r) * np.sin(np.exp(r))
            # past r ~ 709 exp overflows; the amplitude is below 1e-300 there
            return np.where(r > 700.0, 0.0, out)
        return self.radial(r) - 1.0

    def radial_derivative(self, r):
        r = np.asarray(r, dtype=float)
        k, p = self.kind, self.params
        if k == "constant":
            return np.zeros_like(r)
        if k == "inverse_power":
            return -p[0] * p[1] * r * (1.0 + r * r) ** (-0.5 * p[0] - 1.0)
        if k == "growth_power":
            return p[0] * p[1] * r * (1.0 + r * r) ** (0.5 * p[0] - 1.0)
        if k == "perturbed_one":
            kappa, beta = p
            return -beta * kappa * r * (1.0 + r * r) ** (-0.5 * beta - 1.0)
        if k == "exp_oscillation":
            with np.errstate(over="ignore", invalid="ignore"):
                out = -np.exp(-r) * np.sin(np.exp(r)) + np.cos(np.exp(r))
            return np.where(r > 700.0, np.nan, out)
        return self._table.derivative()(r * r) * 2.0 * r

    def to_dict(self):
        params = self.params
        if self.kind == "custom_radial_table":
            params = [list(map(float, t)) for t in params]
        else:
            params = [float(v) for v in params]
        return {
            "kind": self.kind,
            "params": params,
            "n": self.n,
            "decay": None if self.decay is None else asdict(self.decay),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def field_from_dict(d):
    """Inverse of ``AnalyticField.to_dict``; fills in default decay profiles."""
    unknown = set(d) - {"kind", "params", "n", "decay"}
    if unknown:
        raise ValueError(f"unknown field keys: {sorted(unknown)}")
    kind = d["kind"]
    n = int(d.get("n", 3))
    params = d.get("params", [])
    decay = d.get("decay")
    decay = DecayProfile(**decay) if decay else None
    if kind == "custom_radial_table":
        if decay is None:
            raise ValueError("custom_radial_table requires an explicit decay profile")
        return radial_table(params[0], params[1], decay, n=n)
    makers = {
        "constant": constant,
        "inverse_power": inverse_power,
        "growth_power": growth_power,
        "exp_oscillation": exp_oscillation,
        "perturbed_one": perturbed_one,
    }
    if kind not in makers:
        raise ValueError(f"unknown field kind {kind!r}")
    f = makers[kind](*params, n=n)
    if decay is not None:
        f = AnalyticField(kind, f.params, n, decay)
    return f


# constructors ---------------------------------------------------------------


def constant(c=1.0, n=3):
    return AnalyticField("constant", (float(c),), n, DecayProfile(0.0, c_prime=max(abs(c), 1e-300), direction="growth"))


def inverse_power(sigma, amplitude=1.0, n=3, alpha=0.9):
    """amplitude * (1 + |x|^2)^(-sigma/2)."""
    prof = DecayProfile(float(sigma), alpha=alpha, c_prime=abs(amplitude) or 1.0)
    return AnalyticField("inverse_power", (float(sigma), float(amplitude)), n, prof)


def growth_power(sigma, amplitude=1.0, n=3, alpha=0.9):
    """amplitude * (1 + |x|^2)^(sigma/2); bounded by amplitude 2^(sigma/2) |x|^sigma for |x| > 1."""
    prof = DecayProfile(float(sigma), alpha=alpha, c_prime=(abs(amplitude) or 1.0) * 2 ** (0.5 * sigma), direction="growth")
    return AnalyticField("growth_power", (float(sigma), float(amplitude)), n, prof)


def perturbed_one(kappa, beta, n=3, alpha=0.9):
    """1 + kappa (1 + |x|^2)^(-beta/2); positive whenever |kappa| < 1."""
    prof = DecayProfile(float(beta), alpha=alpha, c_prime=abs(kappa) or 1.0)
    return AnalyticField("perturbed_one", (float(kappa), float(beta)), n, prof)


def exp_oscillation(n=3):
    """1 + exp(-|x|) sin(exp(|x|))."""
    # e^{-r} <= 6000 r^{-8} for r >= 1 (max of r^8 e^{-r} is 8^8 e^{-8} ~ 5624)
    prof = DecayProfile(8.0, alpha=0.5, c_prime=6000.0)
    return AnalyticField("exp_oscillation", (), n, prof)


def radial_table(radii, values, decay, n=3):
    """Monotone-cubic interpolant of tabulated radial values."""
    return AnalyticField(
        "custom_radial_table",
        (tuple(map(float, radii)), tuple(map(float, values))),
        n,
        decay,
    )


# composite fields -----------------------------------------------------------


class RadialProfile(Field):
    """Wraps a vectorised radial profile r -> u(r) (solver accessors, potentials)."""

    def __init__(self, func, decay=None, far_level=0.0, n=3, derivative=None, name="profile",
                 kinks=(), domain_max=math.inf):
        self._func = func
        self.kinks = tuple(float(k) for k in kinks)
        self.domain_max = float(domain_max)
        self._deriv = derivative
        self.decay = decay
        self.far_level = far_level
        self.n = n
        self.name = name

    def radial(self, r):
        return np.asarray(self._func(np.asarray(r, dtype=float)), dtype=float)

    def radial_derivative(self, r):
        if self._deriv is None:
            raise NotImplementedError(f"{self.name} has no analytic derivative")
        return np.asarray(self._deriv(np.asarray(r, dtype=float)), dtype=float)

    def __repr__(self):
        return f"RadialProfile({self.name})"


class ScaledField(Field):
    def __init__(self, base, factor):
        self.base, self.factor = base, float(factor)
        self.n = base.n
        self.kinks, self.domain_max = base.kinks, base.domain_max
        self.is_radial = base.is_radial
        self.far_level = self.factor * base.far_level
        d = base.decay
        self.decay = None if d is None else DecayProfile(
            d.sigma, d.alpha, d.c_prime * (abs(self.factor) or 1.0), d.r_prime, d.direction
        )

    def __call__(self, x):
        return self.factor * self.base(x)

    def radial(self, r):
        return self.factor * self.base.radial(r)

    def radial_derivative(self, r):
        return self.factor * self.base.radial_derivative(r)


def _combine_profiles(d1, d2, t, alpha=None):
    if d1 is None or d2 is None:
        return None
    return DecayProfile.from_tail_exponent(
        t,
        alpha=min(d1.alpha, d2.alpha) if alpha is None else alpha,
        c_prime=d1.c_prime + d2.c_prime + d1.c_prime * d2.c_prime,
        r_prime=max(d1.r_prime, d2.r_prime),
    )


class SumField(Field):
    def __init__(self, u1, u2):
        if u1.n != u2.n:
            raise ValueError("dimension mismatch")
        self.u1, self.u2 = u1, u2
        self.n = u1.n
        self.kinks = tuple(sorted(set(u1.kinks) | set(u2.kinks)))
        self.domain_max = min(u1.domain_max, u2.domain_max)
        self.is_radial = u1.is_radial and u2.is_radial
        self.far_level = u1.far_level + u2.far_level
        if u1.decay is not None and u2.decay is not None:
            t = max(u1.decay.tail_exponent, u2.decay.tail_exponent)
            self.decay = _combine_profiles(u1.decay, u2.decay, t)

    def __call__(self, x):
        return self.u1(x) + self.u2(x)

    def radial(self, r):
        return self.u1.radial(r) + self.u2.radial(r)

    def radial_derivative(self, r):
        return self.u1.radial_derivative(r) + self.u2.radial_derivative(r)


class ProductField(Field):
    def __init__(self, u1, u2):
        if u1.n != u2.n:
            raise ValueError("dimension mismatch")
        self.u1, self.u2 = u1, u2
        self.n = u1.n
        self.kinks = tuple(sorted(set(u1.kinks) | set(u2.kinks)))
        self.domain_max = min(u1.domain_max, u2.domain_max)
        self.is_radial = u1.is_radial and u2.is_radial
        self.far_level = u1.far_level * u2.far_level
        d1, d2 = u1.decay, u2.decay
        if d1 is not None and d2 is not None:
            cands = [d1.tail_exponent + d2.tail_exponent]
            if u1.far_level != 0.0:
                cands.append(d2.tail_exponent)
            if u2.far_level != 0.0:
                cands.append(d1.tail_exponent)
            self.decay = _combine_profiles(d1, d2, max(cands))

    def __call__(self, x):
        return self.u1(x) * self.u2(x)

    def radial(self, r):
        return self.u1.radial(r) * self.u2.radial(r)

    def radial_derivative(self, r):
        return self.u1.radial_derivative(r) * self.u2.radial(r) + self.u1.radial(r) * self.u2.radial_derivative(r)


class PartialField(Field):
    """The (non-radial) partial derivative d u / d x_k of a radial field."""

    is_radial = False
    far_level = 0.0

    def __init__(self, base, k):
        if not base.is_radial:
            raise ValueError("PartialField needs a radial base field")
        if not 0 <= k < base.n:
            raise ValueError("direction index out of range")
        self.base, self.k, self.n = base, int(k), base.n
        self.kinks, self.domain_max = base.kinks, base.domain_max
        d = base.decay
        if d is not None:
            # one more power of decay; for growth below 1 the derivative decays
            t = d.tail_exponent - 1.0
            self.decay = DecayProfile.from_tail_exponent(
                t, alpha=d.alpha, c_prime=d.c_prime * max(1.0, d.sigma), r_prime=d.r_prime
            )

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r == 0.0, 1.0, r)
        du = self.base.radial_derivative(r)
        return np.where(r == 0.0, 0.0, du * x[..., self.k] / safe)


# Hoelder seminorms ----------------------------------------------------------


@dataclass
class HolderEstimate:
    """Sampled lower bound for [u]_{C^alpha} on a closed ball."""

    alpha: float
    seminorm: float
    region_center: tuple
    region_radius: float
    pair_count: int
    seed: int = DEFAULT_SEED
    worst_pair: Optional[tuple] = None

    def to_dict(self):
        d = asdict(self)
        d["region_center"] = list(map(float, self.region_center))
        if self.worst_pair is not None:
            d["worst_pair"] = [list(map(float, z)) for z in self.worst_pair]
        return d


def sample_ball_pairs(center, radius, pairs, seed=DEFAULT_SEED, d_min_rel=1e-4, d_max_rel=2.0):
    """Deterministic pair sample inside the closed ball B_radius(center).

    Pair i has separation ``d_i`` drawn from a low-discrepancy sequence,
    log-uniform on [radius * d_min_rel, radius * d_max_rel]; its midpoint and
    direction come from a seeded stream. The sample for ``pairs = N`` is a
    prefix of the sample for any larger count with the same seed, so the
    resulting maxima are monotone in the pair count.
    """
    center = np.asarray(center, dtype=float)
    n = center.size
    if radius <= 0:
        raise ValueError("radius must be positive")
    if pairs < 1:
        raise ValueError("need at least one pair")
    i = np.arange(pairs)
    golden = 0.5 * (math.sqrt(5.0) - 1.0)
    frac = np.mod((i + 0.5) * golden, 1.0)
    d = radius * d_min_rel * (d_max_rel / d_min_rel) ** frac
    g = np.random.default_rng(seed).standard_normal((pairs, 2 * n + 1))
    mid_dir = g[:, :n] / np.linalg.norm(g[:, :n], axis=1, keepdims=True)
    pair_dir = g[:, n : 2 * n] / np.linalg.norm(g[:, n : 2 * n], axis=1, keepdims=True)
    rad = (radius - 0.5 * d) * ndtr(g[:, 2 * n]) ** (1.0 / n)
    mid = center + rad[:, None] * mid_dir
    z1 = mid + 0.5 * d[:, None] * pair_dir
    z2 = mid - 0.5 * d[:, None] * pair_dir
    return z1, z2, np.linalg.norm(z1 - z2, axis=1)


def holder_seminorm(u, alpha, center, radius, pairs=4096, rng_seed=DEFAULT_SEED):
    """Sampled C^alpha seminorm of ``u`` over the closed ball B_radius(center)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=float)
    z1, z2, d = sample_ball_pairs(center, radius, pairs, rng_seed)
    best, k = kernels.pair_ratio_max(u(z1), u(z2), d, alpha)
    return HolderEstimate(
        alpha=alpha,
        seminorm=best,
        region_center=tuple(center.tolist()),
        region_radius=float(radius),
        pair_count=int(pairs),
        seed=int(rng_seed),
        worst_pair=(tuple(map(float, z1[k])), tuple(map(float, z2[k]))) if k >= 0 else None,
    )


def loglog_slope(r, v):
    """Least-squares slope of log v against log r (v > 0)."""
    return float(np.polyfit(np.log(r), np.log(v), 1)[0])


@dataclass
class HypothesisReport:
    alpha: float
    beta: float
    radii: list
    value_seq: list
    holder_seq: list
    value_slope: float
    holder_slope: float
    tolerance: float
    passed: bool
    seed: int = DEFAULT_SEED

    def to_dict(self):
        return asdict(self)

    def csv_rows(self):
        """Rows (r, value, bound, pass) with bound = first value grown at the tolerated slope."""
        rows = []
        for seq_name, seq in (("value", self.value_seq), ("holder", self.holder_seq)):
            ref = seq[0]
            for r, v in zip(self.radii, seq):
                bound = ref * (r / self.radii[0]) ** self.tolerance
                rows.append((seq_name, r, v, bound, bool(v <= bound * (1 + 1e-9) or v == 0.0)))
        return rows


def verify_hypothesis_H(f, alpha, beta, radii=None, pairs=2048, tolerance=0.1, rng_seed=DEFAULT_SEED):
    """Check boundedness of r^beta |f - 1| and r^(beta+alpha) [f]_{C^alpha(B_{r/2}(x))}.

    Points sit on the first coordinate axis at the dyadic radii. A sequence
    counts as bounded when its log-log trend slope is at most ``tolerance``
    (identically zero sequences pass outright).
    """
    if beta <= 2:
        raise ValueError("hypothesis (H) requires beta > 2")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    r_prime = f.decay.r_prime if f.decay is not None else 1.0
    if radii is None:
        radii = [2.0**k for k in range(2, 11)]
    radii = [float(r) for r in radii]
    if len(radii) < 2 or any(r < 2 * r_prime for r in radii):
        raise ValueError("need >= 2 radii, all >= 2 R'")
    vals, hold = [], []
    for r in radii:
        x = np.zeros(f.n)
        x[0] = r
        dev = abs(float(np.asarray(f.deviation(np.array([r])))[0]))
        vals.append(r**beta * dev)
        est = holder_seminorm(f, alpha, x, r / 2.0, pairs=pairs, rng_seed=rng_seed)
        hold.append(r ** (beta + alpha) * est.seminorm)

    def slope(seq):
        seq = np.asarray(seq)
        if np.all(seq == 0.0):
            return 0.0
        if np.any(seq <= 0.0):
            return math.inf
        return loglog_slope(radii, seq)

    s1, s2 = slope(vals), slope(hold)
    return HypothesisReport(
        alpha=alpha,
        beta=beta,
        radii=radii,
        value_seq=vals,
        holder_seq=hold,
        value_slope=s1,
        holder_slope=s2,
        tolerance=tolerance,
        passed=bool(s1 <= tolerance and s2 <= tolerance),
        seed=rng_seed,
    )


def check_decay_envelope(u, radii: Sequence[float]):
    """Spot-check |u - level| <= c' r^(-sigma) (or growth) at sample radii > R'."""
    d = u.decay
    r = np.asarray(radii, dtype=float)
    r = r[r > d.r_prime]
    lhs = np.abs(u.deviation(r)) if u.far_level == 1.0 else np.abs(u.radial(r) - u.far_level)
    return bool(np.all(lhs <= d.envelope(r) * (1 + 1e-12)))
