import numpy as np
import pytest

from resolvent_kit import funceq
from resolvent_kit.errors import IntervalExceeded, ValidityViolation
from resolvent_kit.families import Generator, make_family
from resolvent_kit.funceq import EquationCase, check, coarsen, detect_violation, lattice, refinement_order
from resolvent_kit.kernels import Grid

UPPER = Generator.dense([[0, 1], [0, 0]])
LOWER = Generator.dense([[0, 0], [1, 0]])
A2 = Generator.dense([[-1.0, 0.3], [0.2, -2.0]])
SCALAR = Generator.scalar(-1.0)


def test_lattice_respects_budget():
    stride, rows = lattice(64, max_pairs=400)
    pairs = [(i, j) for i, js in rows.items() for j in js]
    assert len(pairs) <= 400
    assert all(i + j <= 64 and i % stride == 0 and j % stride == 0 for i, j in pairs)
    stride1, rows1 = lattice(8, max_pairs=10_000)
    assert stride1 == 1 and sum(len(j) for j in rows1.values()) == 28
    _, rows2 = lattice(8, max_pairs=10_000, skip=2)
    assert min(rows2) == 3 and all(js.min() > 2 for js in rows2.values())


def test_unknown_equation():
    with pytest.raises(ValidityViolation):
        EquationCase("no_such_equation")


@pytest.mark.parametrize("eq,pair,gen,tol", [
    ("cauchy", "semigroup", UPPER, 1e-12),
    ("dalembert", "cosine", LOWER, 1e-12),
    ("cosine_integrated", "cosine", LOWER, 1e-7),
    ("cauchy", "semigroup", A2, 1e-6),
    ("defining_volterra", "frac(0.5,0)", SCALAR, 1e-3),
    ("lizama_poblete", "frac(0.5,0)", SCALAR, 1e-4),
    ("sharp_bc", "frac(0.5,0)", SCALAR, 1e-4),
    ("convoluted_k", "convoluted(g(2))", A2, 1e-6),
    ("rof_translation", "frac(0.5,0.5)", SCALAR, 1e-4),
])
def test_equations_hold_on_their_families(eq, pair, gen, tol):
    fam = make_family(pair, gen, Grid(2.0, 64))
    rep = check(eq, fam, tol=tol)
    assert rep.passed, rep.summary()


def test_translation_ak_converges():
    fam = make_family("frac(0.5,0)", SCALAR, Grid(2.0, 64))
    rep = check("translation_ak", fam, tol=1e-3)
    assert rep.passed, rep.summary()
    order = refinement_order("translation_ak", fam, tol=1e-3)
    assert order is not None and order > 1.0


def test_translation_aa_on_frac_aa():
    fam = make_family("frac_aa(0.5)", SCALAR, Grid(2.0, 32))
    rep = check("translation_aa", fam, tol=1e-3)
    assert rep.passed, rep.summary()


@pytest.mark.parametrize("eq", ["eps_semigroup", "eps_resolvent"])
@pytest.mark.parametrize("eps", [0.0, 0.5, 1.0])
def test_interpolating_equations(eq, eps):
    pair = f"convoluted(interp({eps}))" if eq == "eps_semigroup" else f"resolvent_interp({eps})"
    fam = make_family(pair, A2, Grid(2.0, 32))
    rep = check(eq, fam, tol=1e-4)
    assert rep.passed, rep.summary()


def test_uncorrected_eps_resolvent_form_fails():
    # without the S(t)P(s) + S(s)P(t) correction the equation misses by O(1)
    fam = make_family("resolvent_interp(0.5)", A2, Grid(2.0, 32))
    case = EquationCase("eps_resolvent", params={"uncorrected": True})
    rep = check(case, fam, tol=1e-4)
    assert not rep.passed and rep.max > 1e-2


@pytest.mark.parametrize("eq,pair,gen", [
    ("dalembert", "semigroup", UPPER),
    ("cauchy", "cosine", LOWER),
    ("translation_aa", "frac(0.5,0)", SCALAR),
    ("superdiff_tk", "frac(2.5,0)", SCALAR),
])
def test_validity_predicates(eq, pair, gen):
    fam = make_family(pair, gen, Grid(1.0, 16))
    with pytest.raises(ValidityViolation):
        check(eq, fam)


def test_explicit_pairs_and_interval():
    fam = make_family("semigroup", UPPER, Grid(2.0, 16))
    rep = check("cauchy", fam, pairs=[(0.5, 0.5), (1.0, 0.75)], tol=1e-12)
    assert rep.passed and len(rep.residuals) == 2
    with pytest.raises(IntervalExceeded):
        check("cauchy", fam, pairs=[(1.5, 1.0)])


def test_rof_translation_divergent_moment():
    fam = make_family("frac(1.5,1)", SCALAR, Grid(2.0, 16))
    rep = check("rof_translation", fam)
    assert "divergent-moment" in rep.flags
    assert not rep.passed


@pytest.mark.parametrize("eq,pair,gen", [
    ("cauchy", "semigroup", UPPER),
    ("dalembert", "cosine", LOWER),
])
def test_perturbed_families_are_caught(eq, pair, gen):
    fam = make_family(pair, gen, Grid(2.0, 64))
    rep = detect_violation(eq, fam, eps=1e-2, tol=1e-4)
    assert not rep.passed
    assert rep.max >= 0.5e-2
    # residual grows linearly with the perturbation
    assert rep.metadata["slope"] == pytest.approx(1.0, abs=0.1)


def test_coarsen():
    fam = make_family("semigroup", A2, Grid(2.0, 16))
    c = coarsen(fam)
    assert c.grid.n == 8 and c.grid.T == 2.0
    np.testing.assert_array_equal(c.values, fam.values[1::2])
    with pytest.raises(ValidityViolation):
        coarsen(c, 3)


def test_report_metadata():
    fam = make_family("semigroup", A2, Grid(2.0, 32))
    rep = check("cauchy", fam)
    for key in ("grid", "pair", "stride", "pairs"):
        assert key in rep.metadata
    assert rep.to_dict()["name"]


def test_equation_registry():
    assert "rof_translation" in funceq.EQUATIONS and len(funceq.EQUATIONS) == 14
