import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonlocalma import kernels

numba = pytest.importorskip("numba")

radii = st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=40)


@given(st.floats(0.0, 50.0), radii, st.floats(3.05, 4.95))
def test_angular_g0_parity(a, b, p):
    b = [x for x in b if abs(x - a) > 1e-6 * max(a, 1.0)] or [a + 1.0]
    x = kernels.angular_g0(a, b, p, backend="numba")
    y = kernels.angular_g0(a, b, p, backend="numpy")
    assert np.allclose(x, y, rtol=1e-12, atol=0)


@given(st.floats(0.1, 50.0), radii, st.floats(3.05, 4.95))
def test_angular_d2_parity(a, b, p):
    b = [x for x in b if abs(x - a) > 1e-6 * a] or [a + 1.0]
    x = kernels.angular_d2(a, b, p, backend="numba")
    y = kernels.angular_d2(a, b, p, backend="numpy")
    assert np.allclose(x, y, rtol=1e-10, atol=1e-300)


def test_radial_kernel_sum_parity():
    rng = np.random.default_rng(0)
    b = np.geomspace(1e-2, 1e2, 500)
    w, A, B = rng.uniform(size=(3, b.size))
    x = kernels.radial_kernel_sum(2.0, b, w, A, B, 3.4, backend="numba")
    y = kernels.radial_kernel_sum(2.0, b, w, A, B, 3.4, backend="numpy")
    assert x == pytest.approx(y, rel=1e-12)


@given(st.integers(1, 200), st.floats(0.1, 0.9), st.integers(0, 2**31))
def test_pair_ratio_max_parity(m, alpha, seed):
    rng = np.random.default_rng(seed)
    v1, v2 = rng.standard_normal((2, m))
    d = rng.uniform(1e-3, 5.0, m)
    x, i = kernels.pair_ratio_max(v1, v2, d, alpha, backend="numba")
    y, j = kernels.pair_ratio_max(v1, v2, d, alpha, backend="numpy")
    # the compiled pow may differ from numpy's in the last bit
    assert i == j and x == pytest.approx(y, rel=1e-14)


@given(st.integers(0, 2**31))
def test_cofactor_parity_and_definition(seed):
    mats = np.random.default_rng(seed).standard_normal((50, 3, 3))
    x = kernels.cofactor_batch(mats, backend="numba")
    y = kernels.cofactor_batch(mats, backend="numpy")
    assert np.allclose(x, y, rtol=1e-10, atol=1e-12)
    # cof(M) M^T = det(M) I
    prod = np.einsum("kij,klj->kil", x, mats)
    det = np.linalg.det(mats)
    assert np.allclose(prod, det[:, None, None] * np.eye(3), atol=1e-10)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.cofactor_batch(np.eye(3)[None], backend="fortran")


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("", "numba")])
def test_environment_flag_selects_backend(flag, expected):
    env = dict(os.environ, NONLOCALMA_DISABLE_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from nonlocalma import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == expected


def test_backends_agree_on_an_operator_value():
    code = (
        "from nonlocalma import fields, fracops;"
        "print(repr(fracops.frac_laplacian(fields.inverse_power(1.5), fracops.FracParams(3, 0.2), 3.0)))"
    )
    vals = []
    for flag in ("1", ""):
        env = dict(os.environ, NONLOCALMA_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        vals.append(float(out.stdout))
    assert vals[0] == pytest.approx(vals[1], rel=1e-12)
