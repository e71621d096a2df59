import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from resolvent_kit.errors import DomainError, GridMismatch, UnknownPair
from resolvent_kit.families import (
    PAIR_NAMES,
    Generator,
    default_probes,
    format_complex,
    loads_family_csv,
    make_family,
    pair_kernels,
    parse_complex,
    read_family_csv,
    diagonal_sequence_coefficients,
    diagonal_sequence_norm,
    volterra_residual,
)
from resolvent_kit.kernels import Grid, PowerLaw
from resolvent_kit.special import ml

A2 = [[-1.0, 0.3], [0.2, -2.0]]


@pytest.mark.parametrize("text,value", [("1", 1), ("-2.5", -2.5), ("1+2i", 1 + 2j), ("-3i", -3j),
                                        ("1e-3-4e2i", 1e-3 - 4e2j), ("0.5j", 0.5j)])
def test_parse_complex(text, value):
    assert parse_complex(text) == value


@settings(max_examples=50)
@given(st.complex_numbers(max_magnitude=1e12, allow_nan=False, allow_infinity=False))
def test_complex_roundtrip(z):
    assert parse_complex(format_complex(z)) == z


@pytest.mark.parametrize("gen", [
    Generator.dense(A2),
    Generator.diagonal([-1.0, -2.0 + 1j]),
    Generator.scalar(-1.0),
])
def test_generator_file_roundtrip(gen):
    back = Generator.loads(gen.dumps())
    np.testing.assert_array_equal(back.matrix, gen.matrix)


@pytest.mark.parametrize("text", ["", "d\n1 2\n3 4\n", "2\n1 2\n3\n", "diag\n"])
def test_generator_file_errors(text):
    with pytest.raises(DomainError):
        Generator.loads(text)


def test_generator_block():
    g = Generator.block(Generator.scalar(-1.0))
    np.testing.assert_array_equal(g.matrix, [[0, 1], [-1, 0]])
    assert g.d == 2 and g.inner.d == 1


def test_semigroup_is_matrix_exponential():
    fam = make_family("semigroup", Generator.dense(A2), Grid(2.0, 16))
    for t, v in zip(fam.nodes, fam.values):
        np.testing.assert_allclose(v, scipy.linalg.expm(t * np.array(A2)), atol=1e-13)


def test_cosine_family_scalar():
    fam = make_family("cosine", Generator.scalar(-4.0), Grid(2.0, 16))
    np.testing.assert_allclose(fam.values[:, 0, 0], np.cos(2 * fam.nodes), atol=1e-13)


def test_frac_aa_closed_form():
    fam = make_family("frac_aa(0.5)", Generator.scalar(-1.0), Grid(1.0, 8))
    t = fam.nodes
    np.testing.assert_allclose(fam.values[:, 0, 0], t**-0.5 * ml(0.5, 0.5, -np.sqrt(t)), rtol=1e-13)


def test_frac_one_is_semigroup():
    g = Generator.dense(A2)
    a = make_family("frac(1,0)", g, Grid(1.0, 8))
    b = make_family("semigroup", g, Grid(1.0, 8))
    np.testing.assert_allclose(a.values, b.values, atol=1e-13)


@pytest.mark.parametrize("eps,pair", [(0.0, "semigroup"), (1.0, "cosine")])
def test_interpolating_resolvent_endpoints(eps, pair):
    g = Generator.dense(A2)
    a = make_family(f"resolvent_interp({eps})", g, Grid(1.0, 8))
    b = make_family(pair, g, Grid(1.0, 8))
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)


def test_pair_kernels():
    a, k = pair_kernels("frac(0.5,0)")
    assert a.same_as(PowerLaw(0.5)) and k.text() == "const(1)"
    a, k = pair_kernels("block(g(0.5))")
    assert k.canonical().same_as(PowerLaw(1.5))
    assert "frac_aa" in PAIR_NAMES
    with pytest.raises(UnknownPair):
        pair_kernels("nosuch(1)")


def test_family_needs_generator():
    with pytest.raises(DomainError):
        make_family("semigroup", None, Grid(1.0, 4))


def test_csv_roundtrip(tmp_path):
    fam = make_family("frac(0.5,0)", Generator.dense(A2), Grid(1.0, 8))
    path = tmp_path / "fam.csv"
    fam.write_csv(path)
    back = read_family_csv(path)
    np.testing.assert_array_equal(back.values, fam.values)
    np.testing.assert_array_equal(back.generator.matrix, fam.generator.matrix)
    assert back.grid == fam.grid and back.a.same_as(fam.a) and back.k.same_as(fam.k)
    assert (back.gamma, back.theta) == (fam.gamma, fam.theta)
    assert loads_family_csv(fam.dumps_csv()).values.shape == fam.values.shape


def test_csv_without_grid():
    with pytest.raises(DomainError):
        loads_family_csv("1,0.5,1,0\n")


def test_family_shape_guard():
    fam = make_family("semigroup", Generator.scalar(-1.0), Grid(1.0, 4))
    with pytest.raises(GridMismatch):
        fam._replace(values=np.zeros((3, 1, 1)))


def test_restrict_and_perturb():
    fam = make_family("semigroup", Generator.dense(A2), Grid(2.0, 16))
    r = fam.restrict(8)
    assert r.grid.T == pytest.approx(1.0) and r.values.shape == (8, 2, 2)
    p = fam.perturbed(0.1)
    np.testing.assert_allclose(p.values - fam.values, 0.1 * np.eye(2)[None].repeat(16, axis=0))
    with pytest.raises(DomainError):
        fam.restrict(0)


def test_commutator_and_normalization():
    fam = make_family("frac(0.5,0)", Generator.dense(A2), Grid(1.0, 64))
    assert fam.commutator_norm() < 1e-12
    trend = fam.normalization_trend()
    assert trend[0] < trend[-1] < 0.5


def test_default_probes():
    p = default_probes(3)
    assert p.shape == (3, 4)
    np.testing.assert_allclose(np.linalg.norm(p, axis=0), 1.0)
    np.testing.assert_array_equal(p, default_probes(3))


@pytest.mark.parametrize("pair,gen,tol", [
    ("semigroup", Generator.dense([[0, 1], [0, 0]]), 1e-10),
    ("cosine", Generator.dense([[0, 0], [1, 0]]), 1e-10),
    ("semigroup", Generator.dense(A2), 1e-7),
    ("frac(0.5,0)", Generator.scalar(-1.0), 1e-3),
    ("frac_aa(0.5)", Generator.scalar(-1.0), 1e-3),
    ("frac(1.5,0)", Generator.scalar(-1.0), 1e-3),
    ("convoluted(g(2))", Generator.dense(A2), 1e-6),
    ("resolvent_interp(0.5)", Generator.dense(A2), 1e-6),
    ("block(g(0.5))", Generator.scalar(-1.0), 1e-2),
])
def test_volterra_residual_on_exact_families(pair, gen, tol):
    fam = make_family(pair, gen, Grid(2.0, 128))
    rep = volterra_residual(fam, tol=tol)
    assert rep.passed, rep.summary()


def test_volterra_residual_detects_perturbation():
    fam = make_family("semigroup", Generator.dense(A2), Grid(2.0, 64))
    assert not volterra_residual(fam.perturbed(1e-2), tol=1e-4).passed


def test_mult_family():
    fam = make_family("mult(0.5)", Generator.diagonal([-1.0, -2.0]), Grid(1.0, 64))
    rep = volterra_residual(fam, tol=1e-3)
    assert rep.passed, rep.summary()


def test_diagonal_sequence_coefficients_modulus():
    a = diagonal_sequence_coefficients(1.0, 10)
    m = np.arange(1, 11)
    np.testing.assert_allclose(np.abs(a), np.exp(m) / m, rtol=1e-12)
    np.testing.assert_allclose(a.real, m / 1.0)


def test_diagonal_sequence_norm_below_tau_stabilizes():
    n20 = diagonal_sequence_norm(0.5, 1.0, 1.0, 20, [0.5, 0.9])
    n40 = diagonal_sequence_norm(0.5, 1.0, 1.0, 40, [0.5, 0.9])
    np.testing.assert_allclose(n20, n40, rtol=1e-6)
    assert math.isfinite(n40[-1])


def test_frac_aa_pinned_value():
    # t^{-1/2} E_{1/2,1/2}(-1) at t = 1 equals 1/sqrt(pi) - e erfc(1)
    fam = make_family("frac_aa(0.5)", Generator.scalar(-1.0), Grid(1.0, 4))
    assert fam.values[-1, 0, 0].real == pytest.approx(0.1366060074, rel=1e-9)
