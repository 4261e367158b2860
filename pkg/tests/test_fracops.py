import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from nonlocalma import fields as fl
from nonlocalma import fracops as fo
from nonlocalma.decaylab import fit_decay_exponent


def _bessel_pair(n, s):
    """(-Delta)^s (1+r^2)^{-(n-2s)/2} = K (1+r^2)^{-(n+2s)/2}."""
    K = 4.0**s * math.gamma((n + 2 * s) / 2) / math.gamma((n - 2 * s) / 2)
    return fl.inverse_power(n - 2 * s), K


# constants ----------------------------------------------------------------------


def test_normalization_constant_half_laplacian():
    c, cm = fo.normalization_constant(3, 0.5)
    assert c == pytest.approx(1 / math.pi**2, rel=1e-15)
    # Riesz kernel of order 1/2 in R^3 is 1 / (2 pi^2 |x|^2)
    assert cm == pytest.approx(1 / (2 * math.pi**2), rel=1e-15)


def test_normalization_constant_vanishes_as_s_to_zero():
    vals = [fo.normalization_constant(3, s)[0] for s in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 1e-5


@pytest.mark.parametrize("n,s", [(3, 0.0), (3, 1.0), (0, 0.5), (1, 0.6)])
def test_normalization_constant_rejects(n, s):
    with pytest.raises(ValueError):
        fo.normalization_constant(n, s)


@pytest.mark.parametrize("r", [1.0, 2.0])
def test_fundamental_solution(r):
    P = fo.FracParams(3, 0.5)
    assert fo.fundamental_solution(P, [r, 0, 0]) == pytest.approx(P.c_n_minus_s * r**-2.0, rel=1e-15)


def test_fundamental_solution_singular_at_origin():
    with pytest.raises(ValueError):
        fo.fundamental_solution(fo.FracParams(3, 0.5), np.zeros(3))


# quadrature spec ------------------------------------------------------------------


def test_quadrature_spec_roundtrip_and_validation():
    q = fo.QuadratureSpec(mid_nodes=32, t_nodes=12)
    assert fo.QuadratureSpec.from_json(q.to_json()) == q
    assert q.refined().mid_nodes == 64
    with pytest.raises(ValueError):
        fo.QuadratureSpec(mid_nodes=8)
    with pytest.raises(ValueError):
        fo.QuadratureSpec.from_dict({"nodes": 3})
    with pytest.raises(ValueError):
        fo.QuadratureSpec(near_radius=5.0, tail_radius=2.0)


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.lists(st.floats(-50, 50), min_size=3, max_size=3))
def test_region_split_is_a_partition(x, y):
    ind = fo.RegionSplit(tuple(x)).indicators(np.array(y))
    assert ind.sum() == 1


# closed-form oracles -------------------------------------------------------------------


@pytest.mark.parametrize("s", [0.2, 0.35])
@pytest.mark.parametrize("r", [0.0, 0.5, 2.0, 8.0, 40.0])
def test_fraclap_matches_closed_form(s, r):
    u, K = _bessel_pair(3, s)
    exact = K * (1 + r * r) ** (-(3 + 2 * s) / 2)
    assert fo.frac_laplacian(u, fo.FracParams(3, s), r) == pytest.approx(exact, rel=1e-6)


@pytest.mark.parametrize("r", [0.5, 2.0, 8.0])
def test_brute_path_matches_closed_form(r):
    s = 0.2
    u, K = _bessel_pair(3, s)
    x = np.full(3, r / math.sqrt(3))
    exact = K * (1 + r * r) ** (-(3 + 2 * s) / 2)
    assert fo.frac_laplacian(u, fo.FracParams(3, s), x, method="brute") == pytest.approx(exact, rel=1e-6)


@pytest.mark.parametrize("r", [0.0, 2.0, 8.0, 40.0])
def test_riesz_inverts_closed_form(r):
    s = 0.3
    target, K = _bessel_pair(3, s)
    F = fl.inverse_power(3 + 2 * s, amplitude=K)
    val = fo.riesz_potential(F, fo.FracParams(3, s), r)
    assert val == pytest.approx(target.radial(np.array([r]))[0], rel=1e-6)


def test_truncated_fundamental_solution_is_harmonic_outside_the_cut():
    """(-Delta)^s Phi_s vanishes at x != 0, so only the cut-off correction survives."""
    s, eps, x = 0.3, 0.5, 8.0
    P = fo.FracParams(3, s)
    c, q = P.c_n_minus_s, 2 * s - 3
    prof = lambda r: c * np.maximum(np.asarray(r, dtype=float), eps) ** q
    der = lambda r: np.where(np.asarray(r) > eps, c * q * np.maximum(r, eps) ** (q - 1), 0.0)
    u = fl.RadialProfile(prof, fl.DecayProfile(-q), 0.0, 3, der, "phi_cut", kinks=(eps,))
    res = fo.frac_laplacian(u, P, x, diagnostic=True)

    def sphere_mean(r):
        g = lambda t: (x * x + r * r - 2 * x * r * t) ** (-(3 + 2 * s) / 2)
        return 2 * math.pi * integrate.quad(g, -1, 1, epsabs=0, epsrel=1e-13)[0]

    corr = integrate.quad(lambda r: (r**q - eps**q) * r * r * sphere_mean(r), 0, eps, epsabs=0, epsrel=1e-12)[0]
    assert res.value == pytest.approx(P.c_ns * c * corr, rel=1e-8)
    # without the correction the integrand scale is far larger than the result
    assert abs(res.value - P.c_ns * c * corr) <= 1e-3 * res.scale


# trivial identities -----------------------------------------------------------------------


@pytest.mark.parametrize("x", [0.0, 1.0, [1.0, 2.0, 3.0]])
def test_constant_has_zero_fraclap(x):
    assert fo.frac_laplacian(fl.constant(2.0), fo.FracParams(3, 0.3), x) == 0.0


def test_riesz_of_zero():
    assert fo.riesz_potential(fl.inverse_power(4.0, amplitude=0.0), fo.FracParams(3, 0.3), 4.0) == 0.0


def test_bilinear_with_constant_factor_vanishes():
    P = fo.FracParams(3, 0.2)
    assert fo.bilinear_remainder(fl.inverse_power(1.0), fl.constant(1.0), P, 3.0) == 0.0


@given(st.floats(-4.0, 4.0).filter(lambda a: abs(a) > 1e-3), st.floats(0.0, 50.0))
def test_fraclap_is_linear_in_amplitude(amp, r):
    P = fo.FracParams(3, 0.2)
    base = fo.frac_laplacian(fl.inverse_power(1.5), P, r)
    scaled = fo.frac_laplacian(fl.inverse_power(1.5, amplitude=amp), P, r)
    assert scaled == pytest.approx(amp * base, rel=1e-12, abs=1e-300)


# decay examples ---------------------------------------------------------------------


def _exponent(fn, radii):
    return fit_decay_exponent(radii, [fn(r) for r in radii]).exponent


def test_fraclap_decay_sigma_one():
    P = fo.FracParams(3, 0.2)
    e = _exponent(lambda r: fo.frac_laplacian(fl.inverse_power(1.0), P, r), [8.0, 16.0, 32.0, 64.0])
    assert e <= -1.4 + 0.1


def test_fraclap_decay_min_branch():
    P = fo.FracParams(3, 0.2)
    e = _exponent(lambda r: fo.frac_laplacian_radial(fl.inverse_power(5.0), P, r), [8.0 * 2**k for k in range(6)])
    assert e <= -3.3


def test_riesz_decay_sigma_four():
    P = fo.FracParams(3, 0.3)
    e = _exponent(lambda r: fo.riesz_potential(fl.inverse_power(4.0), P, r), [8.0 * 2**k for k in range(6)])
    assert e <= -2.4 + 0.1


def test_bilinear_decay_sigma_one():
    P = fo.FracParams(3, 0.2)
    u = fl.inverse_power(1.0)
    e = _exponent(lambda r: fo.bilinear_remainder(u, u, P, r), [8.0 * 2**k for k in range(5)])
    assert e <= -2.4 + 0.1


# product rule -------------------------------------------------------------------------


@pytest.mark.parametrize(
    "u1,u2,s,r",
    [
        (fl.inverse_power(2.0), fl.inverse_power(2.0), 0.2, 4.0),
        (fl.inverse_power(1.0), fl.growth_power(0.15), 0.1, 8.0),
        (fl.perturbed_one(0.5, 2.5), fl.inverse_power(1.5), 0.1, 2.0),
    ],
)
def test_product_rule_residual(u1, u2, s, r):
    res, err, mag = fo.product_rule_residual(u1, u2, fo.FracParams(3, s), [r, 0, 0], diagnostic=True)
    assert abs(res) <= 1e-3 * mag


def test_product_rule_radial_and_brute_agree():
    P = fo.FracParams(3, 0.2)
    u1, u2 = fl.inverse_power(2.0), fl.inverse_power(1.0)
    x = np.array([1.0, 1.5, -0.5])
    a = fo.bilinear_remainder(u1, u2, P, x, method="radial")
    b = fo.bilinear_remainder(u1, u2, P, x, method="brute")
    assert b == pytest.approx(a, rel=1e-5)


# L_s norm -------------------------------------------------------------------------------


def test_ls_norm_zero_and_divergent():
    P = fo.FracParams(3, 0.3)
    assert fo.ls_norm(fl.inverse_power(2.0, amplitude=0.0), P) == 0.0
    assert fo.ls_norm(fl.growth_power(2.0), P) == math.inf


def test_ls_norm_constant_matches_quadrature():
    P = fo.FracParams(3, 0.3)
    ref = 4 * math.pi * integrate.quad(lambda r: r * r / (1 + r**3.6), 0, np.inf, epsabs=0, epsrel=1e-12, limit=400)[0]
    assert fo.ls_norm(fl.constant(1.0), P) == pytest.approx(ref, rel=1e-8)


# refinement ------------------------------------------------------------------------------


@pytest.mark.parametrize("r", [1.0, 16.0, 100.0])
def test_refinement_change_within_error_estimate(r):
    P = fo.FracParams(3, 0.25)
    u = fl.inverse_power(1.5)
    coarse = fo.frac_laplacian(u, P, r, diagnostic=True)
    fine = fo.frac_laplacian(u, P, r, fo.DEFAULT_QUAD.refined(), diagnostic=True)
    assert abs(fine.value - coarse.value) <= coarse.error + 1e-15 * abs(coarse.value)


def test_diagnostics_csv(tmp_path):
    P = fo.FracParams(3, 0.2)
    rows = [fo.frac_laplacian(fl.inverse_power(1.0), P, r, diagnostic=True) for r in (1.0, 2.0)]
    path = tmp_path / "diag.csv"
    fo.write_diagnostics_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("x0,x1,x2,value") or lines[0].startswith("r,value")
    assert len(lines) == 3
