import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonlocalma import fields as fl
from nonlocalma import masolver as ms
from nonlocalma.decaylab import fit_decay_exponent
from nonlocalma.fracops import FracParams, frac_laplacian

# lim w for f = 1 + 0.5 (1 + r^2)^(-beta/2), n = 3: 40-digit mpmath quadrature of
# int_0^inf t expm1(log1p(m(t)/t^3)/3) dt, m(t) = 0.5 t^3 2F1(3/2, beta/2; 5/2; -t^2)
C_ORACLE = {2.5: 0.9830410812987953, 3.0: 0.4874987647845166, 4.0: 0.2418403411603249}


@pytest.fixture(scope="module")
def flat():
    return ms.solve_radial(fl.constant(1.0), 3, 512.0, 512)


@pytest.fixture(scope="module", params=[2.5, 3.0, 4.0], ids=lambda b: f"beta{b}")
def solved(request):
    beta = request.param
    f = fl.perturbed_one(0.5, beta)
    return beta, f, ms.solve_radial(f)


@pytest.fixture(scope="module")
def sol25():
    f = fl.perturbed_one(0.5, 2.5)
    return f, ms.solve_radial(f)


# Liouville case ---------------------------------------------------------------------


def test_flat_solution_is_quadratic(flat):
    r = flat.grid
    assert np.array_equal(flat.w(r), np.zeros_like(r))
    assert np.allclose(flat.v(r), 0.5 * r * r, rtol=1e-15, atol=0)
    assert flat.w_limit() == 0.0


def test_flat_matrices_are_identity(flat):
    x = np.random.default_rng(1).standard_normal((5, 3)) * 10
    assert np.allclose(ms.hessian(flat, x), np.eye(3), atol=1e-15)
    assert np.array_equal(ms.linearized_coefficients(flat, x, 16), np.broadcast_to(np.eye(3), (5, 3, 3)))


def test_flat_expansion(flat):
    e = ms.extract_expansion(flat)
    assert np.array_equal(np.asarray(e.A), np.eye(3))
    assert e.b == [0.0] * 3 and e.c == 0.0
    assert all(np.all(np.asarray(res) == 0) for res in e.residuals)


def test_flat_bootstrap_terms_vanish(flat):
    f = fl.constant(1.0)
    assert ms.bootstrap_rhs_F(flat, f, 0.2, 3.0) == 0.0
    zero = ms.tabulate_F(flat, f, 0.2, radii=np.linspace(0, 16, 9))
    assert ms.bootstrap_potential_H(zero, 0.2, 2.0) == 0.0
    assert ms.newton_potential(zero, 3, 20.0, 8.0) == 0.0


# solver ----------------------------------------------------------------------------


def test_defect_and_limit_against_oracle(solved):
    beta, f, sol = solved
    assert sol.defect().max() <= 1e-12
    assert sol.w_limit() == pytest.approx(C_ORACLE[beta], rel=1e-9)


def test_derivatives_against_finite_differences(solved):
    _, _, sol = solved
    r = np.array([0.5, 5.0, 50.0, 500.0])
    h = 1e-4 * r
    dw_fd = (sol.w(r + h) - sol.w(r - h)) / (2 * h)
    d2w_fd = (sol.dw(r + h) - sol.dw(r - h)) / (2 * h)
    assert np.allclose(sol.dw(r), dw_fd, rtol=1e-6)
    assert np.allclose(sol.d2w(r), d2w_fd, rtol=1e-6)


def test_accessors_continue_past_r_max(sol25):
    _, sol = sol25
    r = np.array([sol.r_max * (1 - 1e-9), sol.r_max * (1 + 1e-9)])
    expected = sol.dw(r)[0] * (r[1] - r[0])
    assert np.diff(sol.w(r))[0] == pytest.approx(expected, rel=1e-3, abs=1e-15)
    assert abs(np.diff(sol.dw(r))[0] / sol.dw(r)[0]) <= 1e-6


def test_hessian_determinant(sol25):
    f, sol = sol25
    rng = np.random.default_rng(7)
    x = rng.standard_normal((20, 3)) * rng.uniform(0.05, 100, (20, 1))
    det = np.linalg.det(ms.hessian(sol, x))
    assert np.max(np.abs(det / f(x) - 1)) <= 1e-6


def test_hessian_at_origin_and_outside(sol25):
    _, sol = sol25
    assert np.allclose(ms.hessian(sol, np.zeros(3)), sol.d2v(np.array([0.0]))[0] * np.eye(3))
    with pytest.raises(ValueError):
        ms.hessian(sol, [2 * sol.r_max, 0, 0])


def test_linearization_identity(sol25):
    f, sol = sol25
    x = np.random.default_rng(3).standard_normal((10, 3)) * 20
    lhs = np.einsum("kij,kij->k", ms.linearized_coefficients(sol, x, 16), ms.hessian_w(sol, x))
    assert np.allclose(lhs, f.deviation(np.linalg.norm(x, axis=1)), rtol=1e-10, atol=0)


@given(st.floats(-0.9, 3.0), st.floats(-0.9, 3.0))
def test_linearized_eigs_match_cofactor_integral(l1, l2):
    D = np.diag([l1, l2, l2])
    t, w = np.polynomial.legendre.leggauss(16)
    t, w = 0.5 * (t + 1), 0.5 * w
    acc = np.zeros((3, 3))
    for ti, wi in zip(t, w):
        M = np.eye(3) + ti * D
        acc += wi * np.linalg.det(M) * np.linalg.inv(M).T
    rad, tan = ms.linearized_eigs(l1, l2, 3, 16)
    assert rad == pytest.approx(acc[0, 0], rel=1e-12, abs=1e-14)
    assert tan == pytest.approx(acc[1, 1], rel=1e-12, abs=1e-14)


@pytest.mark.parametrize(
    "kw,match",
    [
        (dict(n=2), "n"),
        (dict(r_max=8.0), "r_max"),
        (dict(grid_nodes=100), "grid"),
    ],
)
def test_solve_rejects(kw, match):
    with pytest.raises(ValueError, match=match):
        ms.solve_radial(fl.perturbed_one(0.5, 2.5), **kw)


def test_solve_rejects_nonpositive_f():
    with pytest.raises(ValueError):
        ms.solve_radial(fl.perturbed_one(-1.5, 3.0))


def test_csv_export(sol25, tmp_path):
    _, sol = sol25
    path = tmp_path / "sol.csv"
    sol.to_csv(path)
    head = path.read_text().splitlines()
    assert head[0].split(",") == ["r", "v", "dv", "d2v", "w", "lap_w"]
    assert len(head) == len(sol.grid) + 1
    json.dumps(sol.manifest())


# expansion ---------------------------------------------------------------------------


def test_expansion_k0_rate(solved):
    beta, _, sol = solved
    e = ms.extract_expansion(sol, radii=np.geomspace(32, 1024, 6), beta=beta)
    if beta == 3.0:
        assert e.log_flag and e.fits[0].log_ratio <= 3.0
    else:
        assert e.fits[0].exponent == pytest.approx(2 - min(beta, 3.0), abs=0.1)


def test_expansion_harmonic_correction_recovers_rates(sol25):
    _, sol = sol25
    e = ms.extract_expansion(sol, radii=np.geomspace(16, 256, 9), beta=2.5)
    assert np.allclose(e.harmonic_corrected, [-0.5, -1.5, -2.5], atol=0.01)


def test_expansion_sampled_input_recovers_normal_form(sol25):
    _, sol = sol25
    v = lambda x: sol.v(np.linalg.norm(x, axis=-1))
    e = ms.extract_expansion(v, beta=2.5)
    assert np.allclose(e.A, np.eye(3), atol=1e-8)
    assert np.allclose(e.b, 0.0, atol=1e-6)
    # refitting the quadratic-free remainder is idempotent
    g = lambda x: v(x) - e.polynomial(x) + 0.5 * np.sum(x * x, axis=-1)
    e2 = ms.extract_expansion(g)
    assert np.allclose(e2.A, np.eye(3), atol=1e-10)
    assert abs(e2.c) <= 1e-9 and e2.scale == pytest.approx(1.0, abs=1e-10)


def test_expansion_needs_six_radii(sol25):
    with pytest.raises(ValueError):
        ms.extract_expansion(sol25[1], radii=[8, 16, 32, 64, 128])


# bootstrap ------------------------------------------------------------------------------


@pytest.mark.parametrize("a", [0.0, 2.0, 32.0])
def test_F_equals_fraclap_of_laplacian(sol25, a):
    """(-Delta)^s (Delta w) evaluated directly from the solver profile."""
    f, sol = sol25
    lap = fl.RadialProfile(sol.lap_w, decay=fl.DecayProfile(2.5), name="lap_w")
    direct = frac_laplacian(lap, FracParams(3, 0.2), a)
    assert ms.bootstrap_rhs_F(sol, f, 0.2, a) == pytest.approx(direct, rel=1e-6)


@pytest.mark.slow
def test_F_tensor_path_agrees(sol25):
    f, sol = sol25
    a = 0.5
    assert ms.bootstrap_rhs_F_tensor(sol, f, 0.2, np.array([a, 0.0, 0.0])) == pytest.approx(
        ms.bootstrap_rhs_F(sol, f, 0.2, a), rel=1e-5
    )


@pytest.mark.parametrize("eps0,m0,stages", [(0.3, 1, [0.3, 0.6]), (0.2, 2, [0.2, 0.4, 0.8])])
def test_schedule(eps0, m0, stages):
    m, eps = ms.schedule(eps0)
    assert m == m0 and eps == pytest.approx(stages)


@pytest.mark.parametrize("eps0", [0.0, 0.5, 0.25, 0.7])
def test_schedule_rejects(eps0):
    with pytest.raises(ValueError):
        ms.schedule(eps0)


def test_newton_potential_decay():
    F2 = fl.inverse_power(4.0)
    r = [32.0, 64.0, 128.0, 256.0]
    vals = [ms.newton_potential(F2, 3, x, 8.0) for x in r]
    assert fit_decay_exponent(r, vals).exponent <= 2 - 3 + 0.1


def test_newton_potential_solves_poisson_outside_cutoff():
    F2 = fl.inverse_power(4.0)
    for a in (20.0, 40.0):
        h = 1e-2 * a
        g = lambda x: ms.newton_potential(F2, 3, x, 8.0, tail_radius=1000.0)
        lap = (g(a + h) - 2 * g(a) + g(a - h)) / h**2 + 2 / a * (g(a + h) - g(a - h)) / (2 * h)
        assert lap == pytest.approx(F2.radial(np.array([a]))[0], rel=1e-3)


def test_bootstrap_report_serializes(sol25):
    f, sol = sol25
    rep = ms.run_bootstrap_schedule(sol, f, 0.3, 0.2)
    d = json.loads(rep.to_json())
    assert d["m0"] == 1 and d["stage_eps"] == [0.3, 0.6]
    assert rep.passed
    assert math.isclose(d["eps1"], 0.6)
