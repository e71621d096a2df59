import math

import mpmath
import numpy as np
import pytest
import scipy.linalg
import scipy.special
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from resolvent_kit.errors import DomainError, OutOfRange, PrecisionLoss
from resolvent_kit.special import R0, MLParams, ml, ml_eval, ml_matrix, ml_modulus


def _reference(alpha, beta, z, digits=30):
    """Plain power series in mpmath, with enough digits to absorb the cancellation."""
    z = complex(z)
    peak = abs(z) ** (1 / alpha) if abs(z) > 1 else 1.0
    with mpmath.workdps(int(peak / 2.3) + digits):
        zz = mpmath.mpc(z)
        a, b = mpmath.mpf(alpha), mpmath.mpf(beta)
        total, n = mpmath.mpc(0), 0
        while True:
            # the Gamma arguments must be formed in extended precision too
            term = zz**n * mpmath.rgamma(a * n + b)
            total += term
            n += 1
            if n > 2 * peak + 40 and abs(term) < mpmath.mpf(10) ** (-digits) * max(abs(total), 1e-300):
                return complex(total)


@pytest.mark.parametrize("z", [0.0, 1.0, -3.0, 2.5 + 1j, -20.0, 30.0, -45.0 + 3j])
def test_exponential(z):
    assert ml(1.0, 1.0, z) == pytest.approx(np.exp(z), rel=1e-12)


@pytest.mark.parametrize("x", [0.5, 3.0, 8.0, 25.0])
def test_cosine_and_cosh(x):
    assert ml(2.0, 1.0, -x * x).real == pytest.approx(math.cos(x), abs=1e-12)
    assert ml(2.0, 1.0, x * x).real == pytest.approx(math.cosh(x), rel=1e-12)


@pytest.mark.parametrize("z", [0.3, -1.0, -4.0, -12.0, 2.0, 1 + 2j, -30.0])
def test_half_order_erfc(z):
    # E_{1/2,1}(z) = exp(z^2) erfc(-z)
    expected = complex(mpmath.exp(z**2) * mpmath.erfc(-z))
    assert ml(0.5, 1.0, z) == pytest.approx(expected, rel=1e-11)


def test_docstring_values():
    assert ml(2.0, 1.0, 4.0).real == pytest.approx(math.cosh(2.0))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.25, 1.9), st.floats(0.3, 2.5), st.floats(-12.0, 12.0), st.floats(-12.0, 12.0))
def test_recurrence(alpha, beta, x, y):
    # E_{a,b}(z) = 1/Gamma(b) + z E_{a,a+b}(z)
    z = complex(x, y)
    try:
        lhs = ml(alpha, beta, z)
        rhs = 1 / math.gamma(beta) + z * ml(alpha, alpha + beta, z)
    except PrecisionLoss:
        assume(False)
    assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.3, 1.9), st.floats(0.2, 2.5), st.floats(0.0, 1.0), st.floats(-math.pi, math.pi))
def test_against_multiprecision_series(alpha, beta, frac, theta):
    r = (0.2 + frac * 1.8) * R0(alpha)
    z = r * complex(math.cos(theta), math.sin(theta))
    assume(r ** (1 / alpha) < 400)
    try:
        got = ml_eval(alpha, beta, z)
    except PrecisionLoss:
        assume(False)
    ref = _reference(alpha, beta, z)
    assert abs(got.value - ref) <= 1e-9 * max(abs(ref), 1e-300) + 10 * got.error


def test_regimes_are_reported():
    assert ml_eval(0.5, 1.0, 1.0).regime == "series"
    assert ml_eval(0.8, 1.0, -60.0).regime in ("asymptotic", "extended")
    out = ml_eval(0.5, 1.0, np.array([0.1, -50.0]))
    assert out["value"].shape == (2,)
    assert list(out["regime"])[0] == "series"


def test_overflow_is_refused():
    with pytest.raises(PrecisionLoss):
        ml(0.3, 0.6, 10.5 + 2.5j)


@pytest.mark.parametrize("alpha,beta", [(0.0, 1.0), (-1.0, 1.0), (0.5, -0.5), (math.nan, 1.0)])
def test_parameter_domain(alpha, beta):
    with pytest.raises((DomainError, OutOfRange)):
        MLParams(alpha, beta)


def test_modulus_where_phase_is_lost():
    # |E_{1/2,1}(z)| for z far up the positive real axis: exp(z^2) erfc(-z) ~ 2 exp(z^2)
    mod, bound = ml_modulus(0.5, 1.0, 20.0)
    assert mod == pytest.approx(2 * math.exp(400.0), rel=1e-10)
    assert bound < 1e-9 * mod


@pytest.mark.parametrize("m", [
    [[-1.0, 0.3], [0.2, -2.0]],
    [[0.0, 1.0], [0.0, 0.0]],
    [[-1.0, 0.0], [0.0, -2.0]],
    [[-1.0, 1.0], [0.0, -1.0]],
])
def test_matrix_exponential(m):
    m = np.array(m)
    np.testing.assert_allclose(ml_matrix(1.0, 1.0, m), scipy.linalg.expm(m), atol=1e-12)


def test_matrix_nilpotent_fractional():
    # E_{a,b}(N) = I/Gamma(b) + N/Gamma(a+b) for N^2 = 0
    n = np.array([[0.0, 1.0], [0.0, 0.0]])
    expected = np.eye(2) / math.gamma(1.0) + n / math.gamma(1.5)
    np.testing.assert_allclose(ml_matrix(0.5, 1.0, n), expected, atol=1e-14)


def test_matrix_matches_scalar_on_diagonal():
    vals = ml_matrix(0.7, 1.2, np.diag([-1.0, -3.0, 2.0]))
    np.testing.assert_allclose(np.diag(vals), ml(0.7, 1.2, np.array([-1.0, -3.0, 2.0])), rtol=1e-13)


def test_against_scipy_erfcx_on_negative_axis():
    x = np.linspace(0.1, 30.0, 40)
    np.testing.assert_allclose(ml(0.5, 1.0, -x).real, scipy.special.erfcx(x), rtol=1e-10)
