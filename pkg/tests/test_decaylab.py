import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonlocalma import decaylab as dl
from nonlocalma import fields as fl
from nonlocalma import masolver as ms

DYADIC = [8.0, 16.0, 32.0, 64.0]

# c = lim w for f = 1 + 0.5 (1 + r^2)^(-2); 40-digit mpmath quadrature of
# int_0^inf t [(1 + m(t)/t^3)^(1/3) - 1] dt with m in hypergeometric closed form
C_BETA4 = 0.2418403411603249


# fitting -------------------------------------------------------------------------


def test_exact_power_law():
    fit = dl.fit_decay_exponent(DYADIC, [r**-2.0 for r in DYADIC])
    assert fit.exponent == pytest.approx(-2.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


@given(st.floats(-6.0, 2.0), st.floats(1e-3, 1e3))
def test_power_law_recovered(e, C):
    fit = dl.fit_decay_exponent(DYADIC, [C * r**e for r in DYADIC])
    assert fit.exponent == pytest.approx(e, abs=1e-9)
    assert fit.constant == pytest.approx(C, rel=1e-8)


def test_log_model_bounded_constant():
    r = np.array(DYADIC)
    fit = dl.fit_decay_exponent(r, r**-3.0 * np.log(r), log_model=True, p=3.0)
    assert fit.conclusive
    assert fit.log_ratio == pytest.approx(1.0, abs=1e-12)


def test_zero_values_short_circuit():
    fit = dl.fit_decay_exponent(DYADIC, [0.0] * 4)
    assert fit.status == "zero"


def test_values_below_noise_are_inconclusive():
    fit = dl.fit_decay_exponent(DYADIC, [1e-14, -2e-14, 1e-14, 3e-14], noise=1e-13)
    assert fit.status == "inconclusive"


@pytest.mark.parametrize("radii", [[8.0, 16.0, 32.0], [8.0, 8.0, 16.0, 32.0], [0.0, 1.0, 2.0, 3.0]])
def test_fit_rejects_bad_radii(radii):
    with pytest.raises(ValueError):
        dl.fit_decay_exponent(radii, [1.0] * len(radii))


@given(st.lists(st.floats(1e-8, 1.0), min_size=6, max_size=6))
def test_margin_monotonicity(vals):
    radii = [8.0 * 2**k for k in range(6)]
    loose = dl.bound_check(radii, vals, -1.0, margin=0.15)
    tight = dl.bound_check(radii, vals, -1.0, margin=0.05)
    assert not (tight.passed and not loose.passed)


def test_bound_check_csv(tmp_path):
    chk = dl.bound_check(DYADIC, [r**-2.0 for r in DYADIC], -2.0)
    path = tmp_path / "c.csv"
    chk.write_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "r,value,bound"
    r, v, b = map(float, rows[1].split(","))
    assert v <= b * (1 + 1e-12)


# lemma checkers -------------------------------------------------------------------


@pytest.mark.parametrize("sigma,claimed,log", [(1.0, -1.4, False), (5.0, -3.4, False), (3.0, -3.4, True)])
def test_fraclap_decay(sigma, claimed, log):
    chk = dl.check_fraclap_decay(fl.inverse_power(sigma), 0.2)
    assert chk.claimed_exponent == pytest.approx(claimed)
    assert chk.fitted.log_corrected is log
    assert chk.status == "pass"


def test_growth_bounded_field():
    chk = dl.check_growth_case(fl.growth_power(0.0), 0.3)
    assert chk.claimed_exponent == pytest.approx(-0.6)
    assert chk.status == "pass"


def test_growth_admits_sigma_below_two_s():
    chk = dl.check_growth_case(fl.growth_power(0.3), 0.2)
    assert chk.claimed_exponent == pytest.approx(-0.1)


@pytest.mark.parametrize("sigma,s", [(0.4, 0.2), (0.6, 0.25)])
def test_growth_gate(sigma, s):
    with pytest.raises(ValueError, match="hypothesis"):
        dl.check_growth_case(fl.growth_power(sigma), s)


def test_growth_constant_shortcut():
    chk = dl.check_growth_case(fl.constant(3.0), 0.2)
    assert chk.fitted.status == "zero"
    assert chk.passed


@pytest.mark.parametrize("sigma,claimed,log", [(4.0, -2.4, False), (2.5, -1.9, False), (3.0, -2.4, True)])
def test_riesz_decay(sigma, claimed, log):
    chk = dl.check_riesz_decay(fl.inverse_power(sigma), 0.3)
    assert chk.claimed_exponent == pytest.approx(claimed)
    assert chk.fitted.log_corrected is log
    assert chk.status == "pass"


@pytest.mark.parametrize("s1,s2,claimed", [(1.0, 1.0, -2.4), (2.0, 2.0, -3.4), (1.0, 2.0, -3.4)])
def test_bilinear_decay(s1, s2, claimed):
    chk = dl.check_bilinear_decay(fl.inverse_power(s1), fl.inverse_power(s2), 0.2)
    assert chk.claimed_exponent == pytest.approx(claimed)
    assert chk.status == "pass"


def test_bilinear_with_constant_is_trivial():
    chk = dl.check_bilinear_decay(fl.inverse_power(1.0), fl.constant(1.0), 0.2)
    assert chk.fitted.status == "zero"
    assert chk.passed


def test_holder_constant_factor_gives_zero():
    hc = dl.check_holder_of_remainder(fl.constant(1.0), fl.inverse_power(1.0), 0.2, pairs=64)
    assert hc.estimate.seminorm == 0.0
    assert hc.passed


def test_holder_inverse_power_pass_and_bilinearity():
    u = fl.inverse_power(1.0)
    base = dl.check_holder_of_remainder(u, u, 0.2)
    assert base.passed and 0.0 < base.estimate.seminorm < math.inf
    doubled = dl.check_holder_of_remainder(fl.ScaledField(u, 2.0), u, 0.2)
    # same pair sample, same quadrature: the remainder is exactly linear in each argument
    assert doubled.estimate.seminorm == pytest.approx(2.0 * base.estimate.seminorm, rel=1e-12)


def test_holder_gate():
    with pytest.raises(ValueError, match="hypothesis"):
        dl.check_holder_of_remainder(fl.inverse_power(1.0), fl.inverse_power(1.0), 0.5)


def test_commutation_constant():
    rep = dl.check_commutation(fl.constant(1.0), 0.2, 0, [[1.0, 0.0, 0.0]])
    assert rep.max_abs == 0.0 and rep.passed


@pytest.mark.parametrize("s,case", [(0.2, "i"), (0.7, "ii")])
def test_commutation_cases(s, case):
    pts = [[1.0, 0.5, 0.25], [3.0, -1.0, 0.5]]
    rep = dl.check_commutation(fl.inverse_power(2.0), s, 0, pts, case=case)
    assert rep.max_rel <= 1e-3


@pytest.mark.parametrize("s,case", [(0.5, "i"), (1.0, "ii"), (0.2, "iii")])
def test_commutation_gate(s, case):
    with pytest.raises(ValueError):
        dl.check_commutation(fl.inverse_power(2.0), s, 0, [[1.0, 0, 0]], case=case)


# limits ----------------------------------------------------------------------------


def test_extract_limit_exact_model():
    samples = [(r, 5.0 + 1.0 / r) for r in (4.0, 8.0, 16.0, 32.0, 64.0, 128.0)]
    u0, lf = dl.extract_limit(samples, 1.0)
    assert u0 == pytest.approx(5.0, abs=1e-12)
    assert lf.check.fitted.exponent == pytest.approx(-1.0, abs=1e-9)


def test_extract_limit_constant():
    u0, lf = dl.extract_limit([(r, 2.5) for r in range(1, 8)], 1.0)
    assert u0 == 2.5 and lf.rms == 0.0


def test_extract_limit_from_radial_solution():
    sol = ms.solve_radial(fl.perturbed_one(0.5, 4.0))
    r = np.geomspace(64.0, 8192.0, 8)
    u0, lf = dl.extract_limit(list(zip(r, sol.w(r))), 1.0)
    assert u0 == pytest.approx(C_BETA4, abs=1e-6)
    assert lf.status == "ok"


def test_extract_limit_needs_six_radii():
    with pytest.raises(ValueError):
        dl.extract_limit([(1.0, 1.0), (2.0, 0.5)], 1.0)


def test_lemma_index_covers_checkers():
    for key in ("fraclap-decay", "growth", "riesz-decay", "bilinear-decay", "holder-remainder", "commutation", "limit"):
        title, statement = dl.LEMMA_INDEX[key]
        assert title and statement
