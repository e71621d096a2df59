import math

import numpy as np
import pytest
import scipy.special

from resolvent_kit.bivar import Minus, Plus, Tensor
from resolvent_kit.errors import AbscissaViolation, DegenerateRequest, GridMismatch, HypothesisViolation
from resolvent_kit.kernels import Constant, Exponential, Grid, PowerLaw, sample_kernel
from resolvent_kit.laplace import (
    check_family_transforms,
    check_inversion_le34,
    check_product_rule,
    check_transform_suite,
    scalar_inversion_lhs,
    exp_weights,
    laplace1,
    laplace2,
    laplace2_tabulated,
)


@pytest.mark.parametrize("kernel,lam,exact", [
    (PowerLaw(0.5), 2.0, 2.0**-0.5),
    (PowerLaw(1.5), 1.0 + 1.0j, (1.0 + 1.0j) ** -1.5),
    (Exponential(1.0), 3.0, 0.25),
    (Constant(2.0), 0.5, 4.0),
])
def test_laplace1_closed_forms(kernel, lam, exact):
    assert laplace1(kernel, lam) == pytest.approx(exact, rel=1e-9)


def test_laplace1_truncation_estimate():
    tv = laplace1(Constant(1.0), 1.0, T_max=10.0, full=True)
    assert abs(tv.value - (1 - math.exp(-10.0))) < 1e-12
    assert tv.truncation == pytest.approx(math.exp(-10.0))


def test_laplace1_sampled():
    grid = Grid(40.0, 4000)
    tv = laplace1(sample_kernel(Exponential(1.0), grid), 1.0)
    assert tv == pytest.approx(0.5, abs=1e-10)


def test_abscissa_guard():
    with pytest.raises(AbscissaViolation):
        laplace1(Exponential(-1.0), 0.5)
    with pytest.raises(AbscissaViolation):
        laplace2(Minus(Constant(1.0)), 1.0, -2.0)


@pytest.mark.parametrize("lam,mu", [(1.0, 2.0), (2.0 + 1.0j, 3.0 - 0.5j)])
def test_laplace2_tensor(lam, mu):
    f, g = Exponential(1.0), PowerLaw(0.5)
    exact = f.laplace(lam) * g.laplace(mu)
    assert laplace2(Tensor(f, g), lam, mu) == pytest.approx(exact, rel=1e-5)


def test_laplace2_sum_lift_of_constant():
    # int int e^{-lam t - mu s} dt ds
    assert laplace2(Plus(Constant(1.0)), 1.0, 4.0) == pytest.approx(0.25, rel=1e-12)


def test_exp_weights_exact_for_cubics():
    n, h, lam = 40, 0.1, 0.7
    t = np.arange(n + 1) * h
    for p in range(4):
        w = exp_weights(n, h, lam)
        # int_0^T t^p e^{-lam t} dt through the regularized incomplete gamma
        exact = math.gamma(p + 1) * scipy.special.gammainc(p + 1, lam * n * h) / lam ** (p + 1)
        assert np.sum(w * t**p) == pytest.approx(exact, rel=1e-12)


def test_laplace2_tabulated_product():
    def err(h):
        n = int(round(30 / h))
        t = np.arange(1, n + 1) * h
        vals = np.outer(t * np.exp(-t), t * np.exp(-2 * t))
        return abs(laplace2_tabulated(vals, h, 1.0, 1.0) - 1 / 36)

    coarse, fine = err(0.05), err(0.025)
    assert fine < 1e-6 / 36
    assert math.log2(coarse / fine) > 3.5


def test_transform_suite_passes():
    rep = check_transform_suite()
    assert rep.passed, rep.summary()
    assert len(rep.parts) == 6 * 14 + 1


def test_transform_suite_rejects_equal_points():
    with pytest.raises(DegenerateRequest):
        check_transform_suite(points=((1.0, 1.0),))


def test_product_rule():
    rep = check_product_rule(Tensor(Exponential(1.0), Exponential(2.0)),
                             Tensor(Exponential(1.5), Constant(1.0)), 2.0, 3.0)
    assert rep.passed, rep.summary()


def test_family_transforms():
    out = check_family_transforms()
    assert set(out) == {"sum_lift_transform", "derivative_lift_transform"}
    for name, rep in out.items():
        assert rep.passed, (name, rep.summary())


def test_inversion_sum_part():
    g5 = PowerLaw(0.5)
    rep = check_inversion_le34(g5, g5, Grid(2.0, 8))
    assert rep.passed, rep.summary()


def test_inversion_difference_part_needs_vanishing_c():
    g5 = PowerLaw(0.5)
    with pytest.raises(HypothesisViolation):
        check_inversion_le34(g5, g5, Grid(1.0, 4), part="ii")


def test_inversion_rejects_non_inverse_pair():
    with pytest.raises(HypothesisViolation):
        check_inversion_le34(PowerLaw(0.5), PowerLaw(0.7), Grid(1.0, 4))


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
@pytest.mark.parametrize("t,s", [(1.0, 2.0), (2.0, 1.0), (1.0, 1.0)])
def test_scalar_inversion_identity(alpha, t, s):
    val = scalar_inversion_lhs(alpha, t, s, 64)
    assert val.real == pytest.approx((t + s) ** (alpha - 1), rel=1e-8)
    assert abs(val.imag) < 1e-12


def test_scalar_inversion_grid_guard():
    with pytest.raises(GridMismatch):
        scalar_inversion_lhs(0.5, 1.0, 0.3, 4)
