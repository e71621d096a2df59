import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resolvent_kit.errors import DomainError, GridMismatch, NotIntegrable, OutOfRange
from resolvent_kit.kernels import (
    Constant,
    Convolution,
    ConvPower,
    Exponential,
    Grid,
    LevyHalf,
    PowerLaw,
    SampledValues,
    conv1,
    conv_power,
    multiplier_M,
    parse_kernel,
    sample_kernel,
    same_kernel,
    solve_pair,
)


@pytest.mark.parametrize("text", ["g(0.5)", "const(2)", "exp(1)", "interp(0.25)", "levy12",
                                  "conv(g(0.5),exp(1))", "pow(g(0.5),3)", "scale(2,g(1.5))",
                                  "sum(g(1),exp(2))"])
def test_parse_roundtrip(text):
    k = parse_kernel(text)
    assert same_kernel(parse_kernel(k.text()), k)


@pytest.mark.parametrize("bad", ["g(", "foo(1)", "g(0.5) x", "exp(one)"])
def test_parse_rejects(bad):
    with pytest.raises(DomainError):
        parse_kernel(bad)


def test_power_law_values_and_transform():
    t = np.array([0.5, 1.0, 2.0])
    np.testing.assert_allclose(PowerLaw(0.5)(t), t**-0.5 / math.gamma(0.5))
    # L[g_a](lam) = lam^-a
    assert PowerLaw(0.5).laplace(4.0) == pytest.approx(0.5)
    assert Exponential(1.0)(1.0) == pytest.approx(math.exp(-1.0))
    assert Exponential(2.0).laplace(3.0) == pytest.approx(0.2)


def test_kernels_reject_nonpositive_time():
    with pytest.raises(DomainError):
        PowerLaw(0.5)(0.0)


@pytest.mark.parametrize("a,b", [(0.5, 0.5), (0.25, 1.5), (1.0, 1.0), (1.5, 2.0)])
def test_power_law_semigroup_symbolic(a, b):
    assert Convolution(PowerLaw(a), PowerLaw(b)).same_as(PowerLaw(a + b))


def test_conv_power_canonical():
    assert ConvPower(PowerLaw(0.5), 3).canonical().same_as(PowerLaw(1.5))
    assert PowerLaw(1.5).derivative().same_as(PowerLaw(0.5))


def test_value_at_zero():
    assert Constant(2.0).value_at_zero() == 2.0
    assert PowerLaw(2.0).value_at_zero() == 0.0
    assert np.isinf(PowerLaw(0.5).value_at_zero().real)


def test_levy_half_transform():
    # exp(-sqrt(lam)) at lam = 4
    assert LevyHalf().laplace(4.0) == pytest.approx(math.exp(-2.0))
    t = 1.0
    assert LevyHalf()(t) == pytest.approx(math.exp(-1 / (4 * t)) / (2 * math.sqrt(math.pi) * t**1.5))


@pytest.mark.parametrize("a,b,tol", [(0.5, 0.5, 5e-6), (0.3, 1.2, 5e-6), (1.0, 2.0, 1e-10), (0.5, 1.5, 5e-6)])
def test_product_integration_matches_closed_form(a, b, tol):
    grid = Grid(1.0, 64)
    numeric = conv1(sample_kernel(PowerLaw(a), grid), sample_kernel(PowerLaw(b), grid), grid)
    exact = PowerLaw(a + b)(grid.nodes)
    err = np.max(np.abs(numeric.node_values().ravel() - exact)) / np.max(np.abs(exact))
    assert err < tol


def test_exponential_convolution_numeric_route():
    def err(n):
        grid = Grid(2.0, n)
        t = grid.nodes
        numeric = conv1(sample_kernel(Exponential(1.0), grid), sample_kernel(Exponential(2.0), grid), grid)
        return np.max(np.abs(numeric.node_values().ravel() - (np.exp(-t) - np.exp(-2 * t))))

    coarse, fine = err(32), err(64)
    assert fine < 1e-6
    assert math.log2(coarse / fine) > 2.5


def test_conv_power_closed_form():
    grid = Grid(1.0, 16)
    vals = conv_power(PowerLaw(0.5), 3, grid).node_values().ravel()
    np.testing.assert_allclose(vals, PowerLaw(1.5)(grid.nodes))
    with pytest.raises(OutOfRange):
        conv_power(PowerLaw(0.5), 0, grid)


def test_multiplier():
    grid = Grid(1.0, 8)
    m = multiplier_M(PowerLaw(2.0), grid)
    np.testing.assert_allclose(m.node_values().ravel(), grid.nodes**2)


def test_conv_guards():
    grid = Grid(1.0, 8)
    with pytest.raises(NotIntegrable):
        conv1(PowerLaw(-0.5), PowerLaw(1.0), grid)
    other = sample_kernel(PowerLaw(1.0), Grid(1.0, 16))
    with pytest.raises(GridMismatch):
        conv1(other, PowerLaw(1.0), grid)


def test_grid():
    g = Grid.parse("2:8")
    assert g.h == 0.25 and g.nodes[-1] == 2.0
    assert g.node_index(0.5) == 2
    with pytest.raises(GridMismatch):
        g.node_index(0.3)
    with pytest.raises(DomainError):
        Grid(0.0, 4)


def test_solve_pair():
    sol = solve_pair(PowerLaw(0.5), PowerLaw(1.0))
    assert sol.c.same_as(PowerLaw(0.5)) and sol.b.same_as(PowerLaw(0.5))
    # (g_a * g_{1-a}) = 1 and (g_a * b) = k
    assert Convolution(PowerLaw(0.5), sol.c).same_as(Constant(1.0))
    bad = solve_pair(PowerLaw(1.5), PowerLaw(1.0))
    assert not bad.c_valid
    with pytest.raises(OutOfRange, match="alpha"):
        bad.require("c")
    t_mode = solve_pair(PowerLaw(1.5), PowerLaw(1.0), mode="t")
    assert t_mode.c.same_as(PowerLaw(0.5))


def test_sampled_values_reads_between_nodes():
    grid = Grid(1.0, 32)
    s = sample_kernel(PowerLaw(0.5), grid)
    assert isinstance(s, SampledValues)
    r = np.array([0.01, 0.3 + 1 / 64])
    np.testing.assert_allclose(s.at(r).ravel(), PowerLaw(0.5)(r), rtol=1e-4)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 2.0), st.floats(0.2, 2.0))
def test_semigroup_property_numeric(a, b):
    # g_a * g_b = g_{a+b} through product integration, for any admissible pair
    grid = Grid(1.0, 32)
    numeric = conv1(sample_kernel(PowerLaw(a), grid), sample_kernel(PowerLaw(b), grid), grid)
    exact = PowerLaw(a + b)(grid.nodes)
    err = np.max(np.abs(numeric.node_values().ravel() - exact)) / np.max(np.abs(exact))
    assert err < 1e-4


def test_levy_half_pinned_value():
    # 8 e^{-1} / (2 sqrt(pi)) at t = 1/4, from the density formula
    assert LevyHalf()(0.25) == pytest.approx(0.8302149948, rel=1e-9)
