"""Extension of local resolvent families to longer intervals.

A family known on ``(0, T]`` is pushed to ``(0, (n+1) T]`` stage by stage.
Each stage keeps a first branch on ``(0, m T]`` and builds the new piece
``(m T, (m+1) T]`` from double convolutions of the previous stage with the
input family.  Four recursions are available:

``general``
    any pair; the kernel degrades to ``(k*a)^{*n} * k``.
``sharp``
    pairs with ``a*b = k`` and ``a*c = 1``; the kernel becomes ``b^{*n} * k``.
``nojump_aa``
    pairs ``(a, a)`` with ``a*c = 1``; the kernel is kept.
``nojump_a1a``
    pairs ``(a*1, a)`` with ``a*c = 1`` and ``c(0+) = 0``; the kernel is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _quadrature as quad
from .errors import DomainError, GridMismatch, HypothesisViolation, NoClosedForm, NonEvaluable, NoShippedPair, OutOfRange
from .families import SampledFamily
from .kernels import (
    Constant,
    Convolution,
    ConvPower,
    Grid,
    Kernel,
    PowerLaw,
    SampledValues,
    Tabulated,
    conv1,
    sample_kernel,
    solve_pair,
)

METHODS = ("general", "sharp", "nojump_aa", "nojump_a1a")
PAIR_TOL = 1e-6
NUMERIC_PAIR_TOL = 1e-2  # sampled pairs: quadrature error of the check itself


@dataclass(frozen=True)
class ExtensionPlan:
    """Method, stage count and the kernels a recursion needs."""

    method: str
    n: int
    T: float
    a: Kernel
    k: Kernel
    b: Kernel | None = None
    c: Kernel | None = None
    c_prime: Kernel | None = None
    checks: dict = field(default_factory=dict)

    @property
    def a_out(self) -> Kernel:
        return self.a

    def k_stage(self, m: int) -> Kernel:
        """Kernel of the stage-``m`` family (``m = 1`` is the input)."""
        if m == 1 or self.method in ("nojump_aa", "nojump_a1a"):
            return self.k
        if self.method == "general":
            return _canon(Convolution(_power(Convolution(self.k, self.a), m - 1), self.k))
        return _canon(Convolution(_power(self.b, m - 1), self.k))

    @property
    def k_out(self) -> Kernel:
        return self.k_stage(self.n + 1)


def _power(f: Kernel, m: int) -> Kernel:
    return f if m == 1 else ConvPower(f, m)


def _canon(f: Kernel) -> Kernel:
    return f.canonical()


def _pair_check(a: Kernel, c: Kernel, target: Kernel, grid: Grid, what: str, tol: float = PAIR_TOL) -> float:
    """Verify ``a*c = target``: structurally when possible, else on the grid."""
    try:
        if Convolution(a, c).same_as(target):
            return 0.0
        Convolution(a, c).terms()
        structural = True
    except NoClosedForm:
        structural = False
    vals = conv1(a, c, grid).node_values()
    ref = np.asarray(target(grid.nodes), dtype=complex)
    err = float(np.max(np.abs(vals.reshape(ref.size, -1)[:, 0] - ref)))
    if err > (tol if structural else NUMERIC_PAIR_TOL):
        raise HypothesisViolation(f"{what} fails: max deviation {err:.3e} on the grid")
    return err


def plan_extension(fam: SampledFamily, method: str, n: int, T: float | None = None,
                   b: Kernel | None = None, c: Kernel | None = None) -> ExtensionPlan:
    """Validate hypotheses and derive the kernels for an extension.

    ``T`` defaults to the whole input grid when the family is global
    (``tau`` beyond the grid) and to the grid end minus one step otherwise.
    """
    if method not in METHODS:
        raise DomainError(f"unknown extension method {method!r}; known: {', '.join(METHODS)}")
    if int(n) != n or n < 1:
        raise OutOfRange("extension needs n >= 1")
    n = int(n)
    g = fam.grid
    if T is None:
        T = g.T if fam.tau > g.T else g.T - g.h
    nT = T / g.h
    if abs(nT - round(nT)) > 1e-9 or round(nT) < 2 or round(nT) > g.n:
        raise GridMismatch(f"T={T!r} must be a grid node inside the input grid (step {g.h!r})")
    if T >= fam.tau:
        raise DomainError(f"T={T!r} must stay below tau={fam.tau!r}")
    a, k = fam.a, fam.k
    checks = {}
    c_prime = None
    if method == "sharp":
        if b is None or c is None:
            try:
                sol = solve_pair(a, k)
            except NoClosedForm:
                raise HypothesisViolation("sharp extension needs b and c; pass them for non power-law pairs") from None
            try:
                sol.require("bc")
            except OutOfRange as exc:
                raise HypothesisViolation(str(exc)) from None
            b = b or sol.b
            c = c or sol.c
        checks["a*b=k"] = _pair_check(a, b, k, g, "a*b = k")
        checks["a*c=1"] = _pair_check(a, c, Constant(1.0), g, "a*c = 1")
        c_prime = _derivative(c)
    elif method == "nojump_aa":
        if not a.same_as(k):
            raise HypothesisViolation(f"nojump_aa needs a pair (a, a), got ({a.text()}, {k.text()})")
        ca = a.canonical()
        if isinstance(ca, PowerLaw) and not 0 < ca.alpha < 1:
            raise HypothesisViolation(f"nojump_aa with a = g_alpha needs 0 < alpha < 1, got alpha={ca.alpha:g}")
        if c is None:
            try:
                sol = solve_pair(a, k)
            except NoClosedForm:
                raise HypothesisViolation("nojump_aa needs c with a*c = 1; pass it for non power-law kernels") from None
            try:
                sol.require("c")
            except OutOfRange as exc:
                raise HypothesisViolation(str(exc)) from None
            c = sol.c
        checks["a*c=1"] = _pair_check(a, c, Constant(1.0), g, "a*c = 1")
        c_prime = _derivative(c)
    elif method == "nojump_a1a":
        if c is None:
            raise NoShippedPair(
                "nojump_a1a ships no kernel pair: power laws cannot give c(0+) = 0 with a*c = 1; "
                "supply a tabulated or closed-form c"
            )
        inner = b  # the kernel a with fam.a = a*1, passed through ``b`` for this method
        if inner is None:
            raise HypothesisViolation("nojump_a1a needs the inner kernel a with pair (a*1, a)")
        if not Convolution(inner, Constant(1.0)).same_as(a) and isinstance(a, Kernel) and a.has_closed_form:
            raise HypothesisViolation("family pair is not of the form (a*1, a)")
        checks["a*c=1"] = _pair_check(inner, c, Constant(1.0), g, "a*c = 1")
        c0 = _value_at_zero(c)
        checks["c(0+)"] = c0
        if abs(c0) > PAIR_TOL:
            raise HypothesisViolation(f"nojump_a1a needs c(0+) = 0, got {c0:.3e}")
        c_prime = _derivative(c)
        b = inner
    return ExtensionPlan(method, n, float(T), a, k, b, c, c_prime, checks)


def _derivative(c: Kernel):
    if isinstance(c, Tabulated):
        sv = c.sampled()
        vals = sv.node_values().reshape(sv.n, -1)[:, 0]
        t = sv.nodes
        der = np.gradient(np.concatenate([[_value_at_zero(c)], vals]), np.concatenate([[0.0], t]), edge_order=2)[1:]
        return Tabulated(sv.grid, der)
    try:
        return c.derivative()
    except NoClosedForm:
        raise HypothesisViolation(f"c={c.text()} has no usable derivative") from None


def _value_at_zero(c: Kernel) -> float:
    if isinstance(c, Tabulated):
        sv = c.sampled()
        v = sv.node_values().reshape(sv.n, -1)[:, 0]
        t = sv.nodes
        # quadratic extrapolation from the first three nodes
        return float(abs(3 * v[0] - 3 * v[1] + v[2])) if t.size >= 3 else float(abs(v[0]))
    return float(abs(c.value_at_zero()))


# ---------------------------------------------------------------------------
# stages


def _operand(kernel: Kernel, grid: Grid):
    """Pointwise operand for a kernel, sampled on ``grid`` if it has no closed form."""
    try:
        return quad.KernelOperand(kernel, grid.h)
    except NonEvaluable:
        return quad.SampledOperand(_sampled_kernel(kernel, grid))


def _sampled_kernel(kernel: Kernel, grid: Grid) -> SampledValues:
    if isinstance(kernel, Tabulated):
        sv = kernel.sampled()
        if sv.n < grid.n or abs(sv.h - grid.h) > 1e-12 * grid.h:
            raise GridMismatch("tabulated kernel does not cover the extension grid")
        return sv
    if isinstance(kernel, Convolution):
        return conv1(_sampled_or_kernel(kernel.f, grid), _sampled_or_kernel(kernel.g, grid), grid)
    if isinstance(kernel, ConvPower):
        out = _sampled_or_kernel(kernel.f, grid)
        for _ in range(kernel.n - 1):
            out = conv1(out, _sampled_or_kernel(kernel.f, grid), grid)
        return out
    return sample_kernel(kernel, grid)


def _sampled_or_kernel(kernel: Kernel, grid: Grid):
    return kernel if kernel.has_closed_form else _sampled_kernel(kernel, grid)


def _conv_family(kernel: Kernel, fam: SampledFamily, grid_ext: Grid):
    """``(kernel * S)`` on the family's own nodes."""
    X = _operand(kernel, grid_ext)
    return quad.conv_nodes(X, quad.SampledOperand(fam.sampled), fam.grid.n)


def _as_family(proto: SampledFamily, grid: Grid, values, k: Kernel, prov: dict) -> SampledFamily:
    gamma = k.singularity_exponent if k.has_closed_form else proto.gamma
    return SampledFamily(grid, values, proto.a, k, proto.generator, prov, math.inf, gamma, proto.theta)


def _sampled_of(values, h, gamma, theta, d):
    if _regular(gamma, theta):
        return SampledValues(h, values, v0=np.zeros((d, d)))
    return SampledValues(h, values, gamma=gamma, theta=theta)


def _regular(gamma, theta):
    return float(gamma).is_integer() and gamma >= 0 and float(theta).is_integer()


def _stage(plan: ExtensionPlan, S1: SampledFamily, Sm: SampledFamily, m: int, grid_ext: Grid) -> np.ndarray:
    """Values of stage ``m+1`` on ``(0, (m+1) T]`` from ``S_m`` on ``(0, m T]``."""
    h = S1.h
    NT = S1.grid.n
    N = Sm.grid.n
    d = S1.d
    out = np.zeros((N + NT, d, d), dtype=complex)
    Xm = quad.SampledOperand(Sm.sampled)
    X1 = quad.SampledOperand(S1.sampled)
    a = plan.a
    method = plan.method
    if method == "general":
        ka = Convolution(plan.k, a)
        out[:N] = _conv_family(ka, Sm, grid_ext)
        plus = quad.plus_rows(_operand(a, grid_ext), Xm, X1, N, NT)
        F = SampledOperand_from(conv_with(a, Sm, grid_ext), Sm, a)
        first = quad.conv_nodes(F, _operand(plan.k, grid_ext), N + NT, x_cells=N)[N:]
        G = SampledOperand_from(conv_with(a, S1, grid_ext), S1, a)
        Km = plan.k_stage(m)
        second = quad.conv_nodes(quad.ShiftedOperand(_operand(Km, grid_ext), N * h), G, NT)
        out[N:] = plus + first + second
    elif method == "sharp":
        out[:N] = _conv_family(plan.b, Sm, grid_ext)
        first = quad.conv_nodes(Xm, _operand(plan.b, grid_ext), N + NT, x_cells=N)[N:]
        bm = _canon(_power(plan.b, m))
        second = quad.conv_nodes(quad.ShiftedOperand(_operand(bm, grid_ext), N * h), X1, NT)
        plus = quad.plus_rows(_operand(plan.c_prime, grid_ext), Xm, X1, N, NT)
        out[N:] = first + second - plus
    elif method == "nojump_aa":
        out[:N] = Sm.values
        out[N:] = -quad.plus_rows(_operand(plan.c_prime, grid_ext), Xm, X1, N, NT)
    else:  # nojump_a1a
        out[:N] = Sm.values
        w = _operand(plan.c_prime, grid_ext)
        refl = Sm.values[N - 1 - np.arange(1, NT + 1)] if NT < N else None
        if refl is None:
            # reflection reaches the origin: read S_n(2nT - t) through the local model
            r = (N - np.arange(1, NT + 1)) * h
            refl = np.zeros((NT, d, d), dtype=complex)
            pos = r > 0
            refl[pos] = Sm.at(r[pos])
            refl[~pos] = Sm.sampled.values_at(np.array([h * 1e-9]))[0] if not np.all(pos) else 0
        minus = quad.minus_rows(w, Xm, X1, N, NT)
        plus = quad.plus_rows(w, Xm, X1, N, NT)
        out[N:] = -refl + minus - plus
    return out


def conv_with(kernel: Kernel, fam: SampledFamily, grid_ext: Grid) -> np.ndarray:
    return _conv_family(kernel, fam, grid_ext)


def SampledOperand_from(values, fam: SampledFamily, kernel: Kernel):
    """Operand for ``kernel * S`` sampled on the family grid."""
    gamma = fam.gamma + (kernel.singularity_exponent if kernel.has_closed_form else 0.0) + 1.0
    theta = fam.theta
    return quad.SampledOperand(_sampled_of(values, fam.h, gamma, theta, fam.d))


def extend(fam: SampledFamily, method: str, n: int = 1, T: float | None = None,
           b: Kernel | None = None, c: Kernel | None = None, plan: ExtensionPlan | None = None,
           return_stages: bool = False):
    """Extend ``fam`` from ``(0, T]`` to ``(0, (n+1) T]``.

    Returns the family of the last stage, carrying the pair
    ``(a, k_out)`` of the method.  With ``return_stages`` the list of all
    stages (input restriction first) is returned instead.
    """
    plan = plan or plan_extension(fam, method, n, T, b, c)
    g = fam.grid
    NT = int(round(plan.T / g.h))
    S1 = fam.restrict(NT)
    grid_ext = Grid((plan.n + 1) * NT * g.h, (plan.n + 1) * NT)
    stages = [S1]
    Sm = S1
    for m in range(1, plan.n + 1):
        vals = _stage(plan, S1, Sm, m, grid_ext)
        grid_m = Grid((m + 1) * NT * g.h, (m + 1) * NT)
        prov = {"kind": "extended", "method": plan.method, "n": m, "T": plan.T, "checks": dict(plan.checks)}
        Sm = _as_family(fam, grid_m, vals, plan.k_stage(m + 1), prov)
        stages.append(Sm)
    return stages if return_stages else Sm


def extend_general(fam, n=1, T=None, **kw):
    return extend(fam, "general", n, T, **kw)


def extend_sharp(fam, n=1, T=None, b=None, c=None, **kw):
    return extend(fam, "sharp", n, T, b=b, c=c, **kw)


def extend_nojump_aa(fam, n=1, T=None, c=None, **kw):
    return extend(fam, "nojump_aa", n, T, c=c, **kw)


def extend_nojump_a1a(fam, n=1, T=None, a_inner=None, c=None, **kw):
    return extend(fam, "nojump_a1a", n, T, b=a_inner, c=c, **kw)


def general_j_crosscheck(fam: SampledFamily, n: int, j: int, T: float | None = None) -> float:
    """Max difference between the stage ``n+1`` family built from ``S_1`` and from ``S_j``.

    The alternative route writes stage ``n+1`` with ``(S_j, S_{n+1-j})`` in
    place of ``(S_n, S_1)``; both must agree on ``(0, (n+1) T]``.
    """
    if not 1 <= j <= n:
        raise OutOfRange("need 1 <= j <= n")
    plan = plan_extension(fam, "general", n, T)
    stages = extend(fam, "general", n, plan=plan, return_stages=True)
    ref = stages[-1]
    S1 = stages[0]
    NT = S1.grid.n
    h = S1.h
    grid_ext = Grid((n + 1) * NT * h, (n + 1) * NT)
    Sj, Sr = stages[j - 1], stages[n - j]
    N = Sj.grid.n
    a, k = plan.a, plan.k
    ka = Convolution(k, a)
    d = S1.d
    out = np.zeros(((n + 1) * NT, d, d), dtype=complex)
    out[:N] = _conv_family(_canon(_power(ka, n + 1 - j)), Sj, grid_ext)
    M = (n + 1) * NT - N
    plus = quad.plus_rows(_operand(a, grid_ext), quad.SampledOperand(Sj.sampled), quad.SampledOperand(Sr.sampled), N, M)
    F = SampledOperand_from(conv_with(a, Sj, grid_ext), Sj, a)
    k1 = _canon(Convolution(_power(ka, n - j), k)) if n > j else k
    first = quad.conv_nodes(F, _operand(k1, grid_ext), N + M, x_cells=N)[N:]
    G = SampledOperand_from(conv_with(a, Sr, grid_ext), Sr, a)
    k2 = _canon(Convolution(_power(ka, j - 1), k)) if j > 1 else k
    second = quad.conv_nodes(quad.ShiftedOperand(_operand(k2, grid_ext), N * h), G, M)
    out[N:] = plus + first + second
    return float(np.max(np.abs(out - ref.values)))


def continuity_jump(stages, m: int = 1) -> float:
    """``||S_{m+1}(m T + h) - S_m(m T)||`` (one-step jump at the junction)."""
    prev, nxt = stages[m - 1], stages[m]
    N = prev.grid.n
    return float(np.linalg.norm(nxt.values[N] - prev.values[N - 1], ord=2))
