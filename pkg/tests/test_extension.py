import numpy as np
import pytest

from resolvent_kit.errors import DomainError, GridMismatch, HypothesisViolation, NoShippedPair, OutOfRange
from resolvent_kit.extension import (
    METHODS,
    continuity_jump,
    extend,
    general_j_crosscheck,
    plan_extension,
)
from resolvent_kit.families import Generator, make_family, volterra_residual
from resolvent_kit.kernels import Grid, PowerLaw
from resolvent_kit.special import ml

NIL = Generator.dense([[0, 1], [0, 0]])


@pytest.fixture(scope="module")
def nilpotent_stages():
    fam = make_family("semigroup", NIL, Grid(1.0, 32))
    return fam, extend(fam, "general", 2, return_stages=True)


def test_general_stage_grids_and_kernels(nilpotent_stages):
    _, stages = nilpotent_stages
    assert [s.grid.text() for s in stages] == ["1:32", "2:64", "3:96"]
    # (k*a)^{*n} * k with a = k = 1
    assert stages[1].k.same_as(PowerLaw(3.0))
    assert stages[2].k.same_as(PowerLaw(5.0))


@pytest.mark.parametrize("stage,order", [(1, 3.0), (2, 5.0)])
def test_general_matches_global_convoluted_family(nilpotent_stages, stage, order):
    _, stages = nilpotent_stages
    out = stages[stage]
    ref = make_family(f"convoluted(g({order:g}))", NIL, out.grid)
    assert np.max(np.abs(out.values - ref.values)) < 1e-6


def test_general_alternative_routes_agree(nilpotent_stages):
    fam, _ = nilpotent_stages
    assert general_j_crosscheck(fam, 2, 2) == 0.0
    assert general_j_crosscheck(fam, 2, 1) < 1e-6
    with pytest.raises(OutOfRange):
        general_j_crosscheck(fam, 2, 3)


def test_plan_sharp_kernels():
    fam = make_family("frac(0.5,0)", Generator.scalar(-1.0), Grid(1.0, 16))
    plan = plan_extension(fam, "sharp", 2)
    assert plan.b.same_as(PowerLaw(0.5)) and plan.c.same_as(PowerLaw(0.5))
    assert plan.k_stage(2).same_as(PowerLaw(1.5))
    assert plan.k_out.same_as(PowerLaw(2.0))


@pytest.mark.parametrize("method,n,k_out", [("sharp", 1, 1.5), ("sharp", 2, 2.0), ("general", 1, 2.5)])
def test_fractional_extensions_solve_their_equation(method, n, k_out):
    fam = make_family("frac(0.5,0)", Generator.scalar(-1.0), Grid(1.0, 64))
    out = extend(fam, method, n)
    assert out.k.same_as(PowerLaw(k_out))
    rep = volterra_residual(out, tol=1e-3)
    assert rep.passed, rep.summary()


def test_nojump_keeps_kernel_and_matches_closed_form():
    fam = make_family("frac_aa(0.5)", Generator.scalar(-1.0), Grid(1.0, 64))
    stages = extend(fam, "nojump_aa", 2, return_stages=True)
    out = stages[-1]
    assert out.k.same_as(fam.k)
    t = out.nodes
    exact = t**-0.5 * ml(0.5, 0.5, -np.sqrt(t))
    assert np.max(np.abs(out.values[64:, 0, 0] - exact[64:])) < 1e-4
    # no jump at the junction beyond one step of the smooth family
    assert continuity_jump(stages, 1) < 1e-2


def test_method_and_grid_guards():
    fam = make_family("semigroup", NIL, Grid(1.0, 32))
    with pytest.raises(DomainError):
        extend(fam, "foo", 1)
    with pytest.raises(OutOfRange):
        extend(fam, "general", 0)
    with pytest.raises(GridMismatch):
        extend(fam, "general", 1, T=0.3)
    assert set(METHODS) == {"general", "sharp", "nojump_aa", "nojump_a1a"}


def test_nojump_needs_matching_pair():
    fam = make_family("frac(0.5,0)", Generator.scalar(-1.0), Grid(1.0, 16))
    with pytest.raises(HypothesisViolation):
        extend(fam, "nojump_aa", 1)
    with pytest.raises(NoShippedPair):
        extend(fam, "nojump_a1a", 1)
