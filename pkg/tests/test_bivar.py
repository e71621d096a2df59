import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resolvent_kit.bivar import (
    Minus,
    Plus,
    Tensor,
    Translate,
    check_identity_le22,
    check_lemma_le51,
    commutator_diagnostic,
    conv2,
    graded_rule,
)
from resolvent_kit.errors import DomainError, GridMismatch
from resolvent_kit.families import Generator, make_family
from resolvent_kit.kernels import Constant, Exponential, Grid, PowerLaw

ONE = Constant(1.0)


def test_lift_values():
    f = PowerLaw(2.0)  # f(t) = t
    assert Plus(f)(1.0, 2.0) == pytest.approx(3.0)
    assert Minus(f)(1.0, 2.5) == pytest.approx(1.5)
    assert Tensor(f, Exponential(1.0))(2.0, 1.0) == pytest.approx(2 * math.exp(-1))
    assert Translate(f, 0.5)(np.array([1.0]))[0, 0, 0] == pytest.approx(1.5)


@pytest.mark.parametrize("t,s", [(1.0, 1.0), (1.0, 2.0), (2.0, 0.5)])
def test_tensor_tensor(t, s):
    # (1 (x) 1) *2 (1 (x) 1) = t s
    assert conv2(Tensor(ONE, ONE), Tensor(ONE, ONE), t, s, 0.125) == pytest.approx(t * s)


@pytest.mark.parametrize("t,s", [(1.0, 1.0), (1.0, 2.0), (2.0, 0.5)])
def test_sum_lift_polynomial(t, s):
    # int int (t-u + s-v) dv du = t s (t + s) / 2
    val = conv2(Plus(PowerLaw(2.0)), Tensor(ONE, ONE), t, s, 0.125)
    assert val == pytest.approx(t * s * (t + s) / 2, rel=1e-12)


def test_difference_lift_polynomial():
    # int_0^1 int_0^1 |u - v| dv du = 1/3
    assert conv2(Minus(PowerLaw(2.0)), Tensor(ONE, ONE), 1.0, 1.0, 0.0625) == pytest.approx(1 / 3, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 4.0), st.integers(1, 16), st.integers(1, 16))
def test_sum_lift_exponential(lam, i, j):
    h = 1 / 8
    t, s = i * h, j * h
    exact = (1 - math.exp(-lam * t)) * (1 - math.exp(-lam * s)) / lam**2
    val = conv2(Plus(Exponential(lam)), Tensor(ONE, ONE), t, s, h)
    assert abs(val - exact) <= 1e-8 * max(exact, 1e-3)


def test_singular_sum_lift():
    # (g_{1/2})+ *2 (1 (x) 1) at (1, 1): int int (2-u-v)^(-1/2)/Gamma(1/2)
    #   = (4/3)(2^(3/2) - 2) / Gamma(1/2)
    exact = 4 / 3 * (2**1.5 - 2) / math.gamma(0.5)
    assert conv2(Plus(PowerLaw(0.5)), Tensor(ONE, ONE), 1.0, 1.0, 1 / 32) == pytest.approx(exact, rel=1e-8)


@pytest.mark.parametrize("p", [0.5, 0.25, 0.75])
def test_graded_rule_endpoint_singularity(p):
    levels = 20
    x, w = graded_rule(1.0, 0.25, q=8, levels=levels, ends=(True, False))
    assert np.sum(w) == pytest.approx(1.0, abs=1e-14)
    # the innermost cell is left unresolved: its mass bounds the error,
    # on top of the Gauss error of the graded cells
    bound = 2 * (0.25 * 0.2**levels) ** p / p + 1e-8
    assert abs(np.sum(w * x ** (p - 1)) - 1 / p) < bound


def test_identity_le22():
    g5 = PowerLaw(0.5)
    rep = check_identity_le22(g5, ONE, g5, ONE, Grid(1.0, 4))
    assert rep.passed, rep.summary()


@pytest.mark.parametrize("f,g,h,t,tau", [
    (PowerLaw(0.5), ONE, PowerLaw(0.5), 1.0, 0.5),
    (ONE, ONE, ONE, 2.0, 1.0),
    (Exponential(1.0), PowerLaw(1.5), ONE, 1.0, 0.25),
])
def test_splitting_lemma(f, g, h, t, tau):
    rep = check_lemma_le51(f, g, h, t, tau)
    assert rep.passed, rep.summary()


def test_splitting_lemma_guards():
    with pytest.raises(DomainError):
        check_lemma_le51(ONE, ONE, ONE, 1.0, 2.0)
    with pytest.raises(GridMismatch):
        check_lemma_le51(ONE, ONE, ONE, 1.0, 0.3, grid_step=0.25)


def test_commutator_diagnostic():
    fam = make_family("semigroup", Generator.dense([[-1.0, 0.3], [0.2, -2.0]]), Grid(1.0, 8))
    assert commutator_diagnostic(fam) < 1e-12
