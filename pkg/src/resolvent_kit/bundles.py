"""Acceptance bundles: named groups of end-to-end checks.

Each item builds its own families from closed forms, runs one of the
library checkers and returns a :class:`ResidualReport`.  Items take a grid
``scale`` (``0.5`` for the coarse tier, ``2`` for strict); tolerances are
fixed per item.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import funceq
from .bivar import check_identity_le22, check_lemma_le51
from .extension import extend
from .families import Generator, make_family, diagonal_sequence_norm, volterra_residual
from .kernels import Constant, Grid, PowerLaw, same_kernel
from .laplace import check_inversion_le34, check_transform_suite, scalar_inversion_lhs
from .report import ResidualReport, combine
from .special import ml

ROUNDOFF = 1e-12

NILPOTENT_UPPER = [[0, 1], [0, 0]]
NILPOTENT_LOWER = [[0, 0], [1, 0]]


def _n(n: int, scale: float, floor: int = 16) -> int:
    return max(floor, 2 * int(round(n * scale / 2)))


def _gen(m) -> Generator:
    return Generator.dense(np.asarray(m, dtype=complex))


def _order(coarse: float, fine: float) -> float | None:
    """``log2`` ratio, or ``None`` when the fine value is at roundoff."""
    if fine <= ROUNDOFF:
        return None
    return math.log2(coarse / fine) if coarse > 0 else -math.inf


def _order_ok(order, minimum) -> bool:
    return order is None or order >= minimum


def _verdict(name: str, value: float, tol: float, ok: bool, **meta) -> ResidualReport:
    """Report whose verdict is ``ok``; ``value`` is shown as the residual."""
    rep = ResidualReport(name, np.array([value]), tol, metadata=meta)
    if not ok:
        rep.flags.append("criterion-failed")
        rep.residuals = np.array([max(value, 10 * tol) if np.isfinite(value) else np.inf])
    elif not value <= tol:
        rep.residuals = np.array([min(value, tol)])
        rep.metadata["shown_value"] = value
    return rep


# ---------------------------------------------------------------------------
# items


def inversion_scalar(scale: float = 1.0) -> ResidualReport:
    """Scalar inversion identity at alpha = 1/2 against ``(t+s)^(-1/2)``."""
    n = _n(256, scale)
    parts = {}
    for t, s in ((1.0, 2.0), (2.0, 1.0), (1.0, 1.0)):
        exact = (t + s) ** -0.5
        fine = abs(scalar_inversion_lhs(0.5, t, s, n) - exact) / exact
        rough = abs(scalar_inversion_lhs(0.5, t, s, n // 2) - exact) / exact
        order = _order(rough, fine)
        ok = fine <= 1e-3 and _order_ok(order, 0.5)
        parts[f"({t:g},{s:g})"] = _verdict(f"inversion({t:g},{s:g})", fine, 1e-3, ok, n=n, order=order,
                                          coarse_error=rough)
    return combine("inversion_scalar", parts, 1e-3)


def transform_suite(scale: float = 1.0) -> ResidualReport:
    """Double-transform identities at six sample points."""
    return check_transform_suite()


def bivariate_identities(scale: float = 1.0) -> ResidualReport:
    """Mixed single/double convolution identities and the splitting lemma."""
    g5, one = PowerLaw(0.5), Constant(1.0)
    parts = {"le22": check_identity_le22(g5, one, g5, one, Grid(1.0, 4))}
    parts["split(1,1/2)"] = check_lemma_le51(g5, one, g5, 1.0, 0.5)
    parts["split(2,1)"] = check_lemma_le51(one, one, one, 2.0, 1.0)
    parts["inversion(i)"] = check_inversion_le34(g5, g5, Grid(2.0, _n(16, scale, 8)))
    return combine("bivariate_identities", parts, 1e-4)


def volterra_families(scale: float = 1.0) -> ResidualReport:
    """Defining Volterra residual on exact and fractional families."""
    parts = {}
    for pair, A in (("semigroup", NILPOTENT_UPPER), ("cosine", NILPOTENT_LOWER)):
        rep = volterra_residual(make_family(pair, _gen(A), Grid(2.0, 64)), tol=1e-10)
        rep.name = f"volterra[{pair}]"
        parts[pair] = rep
    n = _n(256, scale)
    for pair in ("frac(0.5,0)", "frac_aa(0.5)"):
        fine = volterra_residual(make_family(pair, Generator.scalar(-1), Grid(2.0, n)), tol=1e-3)
        rough = volterra_residual(make_family(pair, Generator.scalar(-1), Grid(2.0, n // 2)), tol=1e-3)
        order = _order(rough.relative_max, fine.relative_max)
        parts[pair] = _verdict(f"volterra[{pair}]", fine.relative_max, 1e-3,
                               fine.passed and _order_ok(order, 1.0), n=n, order=order)
    return combine("volterra_families", parts, 1e-3)


def nojump_extension(scale: float = 1.0) -> ResidualReport:
    """(g_1/2, g_1/2) family restricted to (0, 1] and extended once."""
    parts = {}
    for n, tol in ((_n(128, scale), 1e-2), (_n(256, scale), 3e-3)):
        fam = make_family("frac_aa(0.5)", Generator.scalar(-1), Grid(1.0, n))
        out = extend(fam, "nojump_aa", 1)
        t = out.nodes[n:]
        ref = t**-0.5 * ml(0.5, 0.5, -(t**0.5))
        dev = float(np.max(np.abs(out.values[n:, 0, 0] - ref)) / np.max(np.abs(ref)))
        parts[f"n={n}"] = _verdict(f"nojump[n={n}]", dev, tol, dev <= tol, n=n)
    return combine("nojump_extension", parts, 3e-3)


def general_extension(scale: float = 1.0) -> ResidualReport:
    """General and sharp extensions against global closed forms."""
    n = _n(64, scale)
    parts = {}
    for label, gen, tol in (("nilpotent", _gen(NILPOTENT_UPPER), 1e-6),
                            ("diagonal", Generator.diagonal([-1, -2]), 1e-3)):
        fam = make_family("semigroup", gen, Grid(1.0, n))
        out = extend(fam, "general", 1)
        ref = make_family("convoluted(g(3))", gen, Grid(2.0, 2 * n))
        err = float(np.max(np.linalg.norm(out.values[n:] - ref.values[n:], ord=2, axis=(1, 2))))
        parts[label] = _verdict(f"general[{label}]", err, tol, err <= tol, k_out=out.k.text())
    fam = make_family("frac(0.5,0)", Generator.scalar(-1), Grid(1.0, 2 * n))
    out = extend(fam, "sharp", 1)
    structural = same_kernel(out.k, PowerLaw(1.5))
    res = volterra_residual(out, tol=1e-3)
    parts["sharp"] = _verdict("sharp[frac(0.5,0)]", res.relative_max, 1e-3, structural and res.passed,
                              k_out=out.k.text(), k_out_is_g15=structural)
    return combine("general_extension", parts, 1e-3)


def functional_equations(scale: float = 1.0) -> ResidualReport:
    """Cauchy, d'Alembert, translation, superdiffusion and eps-interpolation checks."""
    parts = {}
    fam_c = make_family("semigroup", _gen(NILPOTENT_UPPER), Grid(2.0, 64))
    fam_d = make_family("cosine", _gen(NILPOTENT_LOWER), Grid(2.0, 64))
    parts["cauchy"] = funceq.check("cauchy", fam_c, tol=1e-12)
    parts["dalembert"] = funceq.check("dalembert", fam_d, tol=1e-12)
    for A in (-1.0, 0.0):
        fam = make_family("frac(0.5,0)", Generator.scalar(A), Grid(2.0, _n(64, scale)))
        parts[f"translation_ak[A={A:g}]"] = funceq.check("translation_ak", fam, tol=1e-3)
    fam = make_family("frac(1.5,0)", Generator.scalar(-1), Grid(2.0, _n(128, scale)))
    parts["superdiff_tk"] = funceq.check("superdiff_tk", fam, tol=1e-2)
    parts.update(eps_continuity(scale).parts)
    parts.update(negative_controls(scale).parts)
    return combine("functional_equations", parts, 1e-2)


EPS_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def eps_continuity(scale: float = 1.0) -> ResidualReport:
    """Interpolating equations at five values of eps, with the end-point equivalences."""
    gen = _gen([[-1.0, 0.3], [0.2, -2.0]])
    grid = Grid(2.0, _n(64, scale))
    parts = {}
    for eq, pair in (("eps_semigroup", "convoluted(interp({}))"), ("eps_resolvent", "resolvent_interp({})")):
        vals = []
        for eps in EPS_GRID:
            vals.append(funceq.check(eq, make_family(pair.format(eps), gen, grid), tol=1e-4).max)
        jumps = float(np.max(np.abs(np.diff(vals))))
        ok = max(vals) <= 1e-4
        parts[eq] = _verdict(f"{eq}[eps sweep]", max(vals), 1e-4, ok, residuals=vals, eps=list(EPS_GRID),
                             max_step=jumps)
    # at eps = 0 the interpolating equation is the Cauchy equation on the same samples
    fam0 = make_family("convoluted(interp(0))", gen, grid)
    r_eps0 = funceq.check("eps_semigroup", fam0, tol=1e-4).max
    r_cauchy = funceq.check("cauchy", fam0, tol=1e-4).max
    diff = abs(r_eps0 - r_cauchy)
    parts["eps=0 vs cauchy"] = _verdict("eps=0 vs cauchy", diff, 1e-12, diff <= 1e-12)
    return combine("eps_continuity", parts, 1e-4)


def negative_controls(scale: float = 1.0, eps: float = 1e-2) -> ResidualReport:
    """Perturbed families ``S + eps I`` must fail with residual at least ``eps / 2``."""
    cases = (
        ("cauchy", make_family("semigroup", _gen(NILPOTENT_UPPER), Grid(2.0, 64))),
        ("dalembert", make_family("cosine", _gen(NILPOTENT_LOWER), Grid(2.0, 64))),
        ("translation_aa", make_family("frac_aa(0.5)", Generator.scalar(-1), Grid(2.0, 32))),
    )
    parts = {}
    for eq, fam in cases:
        rep = funceq.check(eq, fam.perturbed(eps), tol=1e-4)
        ok = (not rep.passed) and rep.max >= 0.5 * eps
        parts[f"perturbed {eq}"] = _verdict(f"perturbed {eq}", 0.0 if ok else rep.max, 1e-4, ok,
                                            perturbed_residual=rep.max, threshold=0.5 * eps)
    return combine("negative_controls", parts, 1e-4)


def divergence_guard(scale: float = 1.0) -> ResidualReport:
    """The (alpha, beta) translation formula is refused for alpha = 3/2 and computed for 1/2."""
    fam = make_family("frac(1.5,1)", Generator.scalar(-1), Grid(2.0, 32))
    rep = funceq.check("rof_translation", fam)
    flagged = "divergent-moment" in rep.flags
    parts = {"alpha=1.5": _verdict("rof_translation[alpha=1.5]", 0.0, 1e-4, flagged, flags=rep.flags)}
    ok_fam = make_family("frac(0.5,0.5)", Generator.scalar(-1), Grid(2.0, 32))
    parts["alpha=0.5"] = funceq.check("rof_translation", ok_fam, tol=1e-4)
    return combine("divergence_guard", parts, 1e-4)


def sequence_boundary(scale: float = 1.0) -> ResidualReport:
    """Truncated diagonal family: stable below t = tau, blowing up above."""
    t = np.array([0.9, 1.5])
    norms = {M: diagonal_sequence_norm(0.5, 1.0, 1.0, M, t) for M in (10, 20, 40)}
    var = float(abs(norms[40][0] - norms[20][0]) / norms[20][0])
    growth = float(norms[40][1] / norms[20][1])
    parts = {
        "t=0.9": _verdict("seq[t=0.9] relative variation", var, 0.05, var <= 0.05),
        "t=1.5": _verdict("seq[t=1.5] growth M=20->40", 0.0, 1e-4, growth >= 2.0, growth=growth),
    }
    meta = {f"M={M}": v.tolist() for M, v in norms.items()}
    return combine("sequence_boundary", parts, 0.05, **meta)


def block_family(scale: float = 1.0) -> ResidualReport:
    """2x2 block family on a scalar inner generator, pair (g_1/2, g_1/2^{*3})."""
    fam = make_family("block(g(0.5))", Generator.scalar(-1), Grid(2.0, _n(128, scale)))
    rep = volterra_residual(fam, tol=1e-2)
    rep.name = "block volterra"
    return rep


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class Item:
    name: str
    criterion: int
    run: Callable[[float], ResidualReport]
    budget: float  # seconds


ITEMS = (
    Item("inversion_scalar", 1, inversion_scalar, 10.0),
    Item("transform_suite", 2, transform_suite, 5.0),
    Item("bivariate_identities", 0, bivariate_identities, 30.0),
    Item("volterra_families", 3, volterra_families, 10.0),
    Item("nojump_extension", 4, nojump_extension, 30.0),
    Item("general_extension", 5, general_extension, 60.0),
    Item("functional_equations", 6, functional_equations, 60.0),
    Item("divergence_guard", 7, divergence_guard, 10.0),
    Item("sequence_boundary", 8, sequence_boundary, 5.0),
    Item("block_family", 9, block_family, 10.0),
)

SUITES = {
    "paper-identities": ("inversion_scalar", "transform_suite", "bivariate_identities", "volterra_families"),
    "extensions": ("nojump_extension", "general_extension", "sequence_boundary", "block_family"),
    "funceqs": ("functional_equations", "divergence_guard"),
}
SUITES["all"] = SUITES["paper-identities"] + SUITES["extensions"] + SUITES["funceqs"]

_BY_NAME = {it.name: it for it in ITEMS}


def item(name: str) -> Item:
    return _BY_NAME[name]


def run_item(name: str, scale: float = 1.0):
    """Run one item; returns ``(report, seconds)``."""
    t0 = time.perf_counter()
    rep = _BY_NAME[name].run(scale)
    return rep, time.perf_counter() - t0
