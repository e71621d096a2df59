"""Functional equations of resolvent families, checked on sampled families.

Every equation is evaluated in the integrated form in which it is stated:
no numerical differentiation is applied.  Residuals are sampled on the
triangle ``{(t_i, s_j): t_i + s_j <= T}`` of grid nodes, decimated by a
common stride so that at most ``max_pairs`` points are visited.

Double convolutions ``(w^+ *_2 (X (x) Y))(t, s)`` go through the plus-row
engine; one-variable terms such as ``b_t * S(s)`` are node convolutions
against a shifted operand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _quadrature as quad
from .errors import IntervalExceeded, NoClosedForm, NotIntegrable, OutOfRange, ValidityViolation
from .extension import SampledOperand_from, _operand
from .families import SampledFamily, default_probes, volterra_residual
from .kernels import Constant, Grid, Kernel, PowerLaw, solve_pair
from .report import ResidualReport

EQUATIONS = (
    "defining_volterra",
    "lizama_poblete",
    "translation_ak",
    "translation_aa",
    "sharp_bc",
    "semigroup_aa",
    "superdiff_tk",
    "cauchy",
    "cosine_integrated",
    "dalembert",
    "convoluted_k",
    "eps_semigroup",
    "eps_resolvent",
    "rof_translation",
)

MAX_PAIRS = 400
PERTURB_EPS = (1e-3, 1e-2)


@dataclass(frozen=True)
class EquationCase:
    """An equation id plus the auxiliary kernels and parameters it needs.

    ``kernels`` may preset ``b``, ``c`` (and ``c_prime``); missing ones are
    solved from the family's pair when the equation needs them.  ``params``
    carries scalars such as ``eps`` or ``alpha``/``beta``.
    """

    id: str
    kernels: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.id not in EQUATIONS:
            raise ValidityViolation(f"unknown equation {self.id!r}; known: {', '.join(EQUATIONS)}")

    def resolve(self, fam: SampledFamily) -> dict:
        """Check the validity predicate on ``fam``'s pair; return the kernels to use."""
        return _VALIDITY[self.id](self, fam.a, fam.k)


# ---------------------------------------------------------------------------
# validity predicates


def _is_one(k: Kernel) -> bool:
    return k.same_as(Constant(1.0)) or k.canonical().same_as(Constant(1.0).canonical())


def _is_t(k: Kernel) -> bool:
    return k.canonical().same_as(PowerLaw(2.0).canonical())


def _interp_eps(k: Kernel):
    """``eps`` with ``k = (1 - eps) + eps t``, or ``None``."""
    try:
        terms = k.canonical().terms()
    except NoClosedForm:
        return None
    c1 = c2 = 0.0
    for term in terms:
        if term.kind != "pow":
            return None
        if abs(term.p - 1.0) < 1e-12:
            c1 += complex(term.c).real
        elif abs(term.p - 2.0) < 1e-12:
            c2 += complex(term.c).real
        else:
            return None
    if abs(c1 + c2 - 1.0) > 1e-12:
        return None
    return c2


def _require(cond: bool, msg: str):
    if not cond:
        raise ValidityViolation(msg)


def _v_none(case, a, k):
    return {}


def _v_aa(case, a, k):
    _require(a.same_as(k) or a.canonical().same_as(k.canonical()),
             f"{case.id} needs a pair (a, a), got ({a.text()}, {k.text()})")
    return {}


def _solved(case, a, k, mode, which):
    kern = dict(case.kernels)
    if all(x in kern for x in which):
        return kern
    try:
        sol = solve_pair(a, k, mode=mode)
        sol.require(which)
    except (NoClosedForm, OutOfRange) as exc:
        raise ValidityViolation(f"{case.id}: no kernels b, c for ({a.text()}, {k.text()}): {exc}") from None
    kern.setdefault("c", sol.c)
    if "b" in which:
        kern.setdefault("b", sol.b)
    return kern


def _with_c_prime(kern):
    if "c_prime" not in kern:
        try:
            kern["c_prime"] = kern["c"].derivative()
        except NoClosedForm:
            raise ValidityViolation("c has no closed-form derivative") from None
    return kern


def _v_sharp(case, a, k):
    return _with_c_prime(_solved(case, a, k, "one", "bc"))


def _v_semigroup_aa(case, a, k):
    _v_aa(case, a, k)
    return _with_c_prime(_solved(case, a, k, "one", "c"))


def _v_superdiff(case, a, k):
    return _solved(case, a, k, "t", "bc")


def _v_pair(a_ok, k_ok, what):
    def check(case, a, k):
        _require(a_ok(a) and k_ok(k), f"{case.id} needs the {what} pair, got ({a.text()}, {k.text()})")
        return {}

    return check


def _v_convoluted(case, a, k):
    _require(_is_one(a), f"convoluted_k needs a = 1, got {a.text()}")
    try:
        terms = k.canonical().terms()
        k1 = k.derivative()
        k2 = k1.derivative()
    except NoClosedForm:
        raise ValidityViolation(f"convoluted_k needs k in C^2 with a closed-form derivative, got {k.text()}") from None
    for term in terms:
        p = float(term.p)
        _require(term.kind in ("pow", "exp") and abs(p - round(p)) < 1e-12 and p >= 1,
                 f"convoluted_k needs k in C^2 near 0, got {k.text()}")
    return {"k_prime": k1, "k_second": k2}


def _eps_of(case, kernel, label):
    eps = _interp_eps(kernel)
    _require(eps is not None, f"{case.id} needs {label} = (1-eps) + eps t, got {kernel.text()}")
    want = case.params.get("eps")
    if want is not None:
        _require(abs(float(want) - eps) < 1e-12, f"{case.id}: eps={want} does not match {label} = {kernel.text()}")
    return {"eps": eps}


def _v_eps_semigroup(case, a, k):
    _require(_is_one(a), f"eps_semigroup needs a = 1, got {a.text()}")
    return _eps_of(case, k, "k")


def _v_eps_resolvent(case, a, k):
    _require(_is_one(k), f"eps_resolvent needs k = 1, got {k.text()}")
    out = _eps_of(case, a, "a")
    # the uncorrected right side, kept for comparison
    out["uncorrected"] = bool(case.params.get("uncorrected", False))
    return out


def _v_rof(case, a, k):
    ca, ck = a.canonical(), k.canonical()
    _require(isinstance(ca, PowerLaw), f"rof_translation needs a = g_alpha, got {a.text()}")
    alpha = float(ca.alpha)
    kappa = float(ck.alpha) if isinstance(ck, PowerLaw) else (1.0 if _is_one(k) else None)
    _require(kappa is not None, f"rof_translation needs k = g_(beta+1), got {k.text()}")
    beta = kappa - 1.0
    _require(beta - alpha > -1, f"rof_translation needs beta - alpha > -1, got {beta - alpha:g}")
    return {"alpha": alpha, "beta": beta}


_VALIDITY = {
    "defining_volterra": _v_none,
    "lizama_poblete": _v_none,
    "translation_ak": _v_none,
    "translation_aa": _v_aa,
    "sharp_bc": _v_sharp,
    "semigroup_aa": _v_semigroup_aa,
    "superdiff_tk": _v_superdiff,
    "cauchy": _v_pair(_is_one, _is_one, "semigroup (1, 1)"),
    "cosine_integrated": _v_pair(_is_t, _is_one, "cosine (t, 1)"),
    "dalembert": _v_pair(_is_t, _is_one, "cosine (t, 1)"),
    "convoluted_k": _v_convoluted,
    "eps_semigroup": _v_eps_semigroup,
    "eps_resolvent": _v_eps_resolvent,
    "rof_translation": _v_rof,
}


# ---------------------------------------------------------------------------
# sampling context


class _Context:
    """Node values and operands shared by the row evaluators."""

    def __init__(self, fam: SampledFamily):
        self.fam = fam
        self.n = fam.grid.n
        self.h = fam.h
        self.d = fam.d
        self.V = fam.values
        self.S = quad.SampledOperand(fam.sampled)
        self._conv = {}

    def node(self, i):
        """``S(i h)`` for index arrays ``i >= 0``; ``S(0)`` needs a regular family."""
        i = np.asarray(i)
        out = self.V[np.maximum(i, 1) - 1].copy()
        if np.any(i == 0):
            v0 = self.fam.sampled.v0
            if v0 is None:
                raise ValidityViolation("S(0) is not defined for this family")
            out[i == 0] = np.broadcast_to(v0, (self.d, self.d))
        return out

    def op(self, kernel: Kernel):
        return _operand(kernel, self.fam.grid)

    def conv(self, kernel: Kernel):
        """``(kernel * S)`` at the nodes and as an operand."""
        key = kernel.key()
        if key not in self._conv:
            vals = quad.conv_nodes(self.op(kernel), self.S, self.n)
            self._conv[key] = (vals, SampledOperand_from(vals, self.fam, kernel))
        return self._conv[key]

    @property
    def P(self):
        return self.conv(Constant(1.0))

    def plus(self, w, X, Y, i, m):
        return quad.plus_rows(w, X, Y, i, m)

    def translated(self, X, Y, i, m):
        """``int_0^{s_j} X(u) Y(t_i + s_j - u) du`` for ``j = 1..m``."""
        return quad.conv_nodes(X, quad.ShiftedOperand(Y, i * self.h), m)


# ---------------------------------------------------------------------------
# row evaluators: residual matrices R(t_i, s_j) for j = 1..m, m = n - i


def _row_lizama(ctx, kern, i, m):
    phi, _ = ctx.conv(ctx.fam.a)
    j = np.arange(1, m + 1)
    kv = np.asarray(ctx.fam.k(ctx.fam.nodes), dtype=complex)
    Si, Sj = ctx.V[i - 1], ctx.V[j - 1]
    return (Sj @ phi[i - 1] - Si @ phi[j - 1]
            - kv[j - 1, None, None] * phi[i - 1] + kv[i - 1] * phi[j - 1])


def _row_translation_ak(ctx, kern, i, m):
    a, k = ctx.fam.a, ctx.fam.k
    _, phi = ctx.conv(a)
    lhs = ctx.plus(ctx.op(a), ctx.S, ctx.S, i, m)
    kop = ctx.op(k)
    rhs = ctx.translated(kop, phi, i, m) - ctx.translated(phi, kop, i, m)
    return lhs - rhs


def _row_translation_aa(ctx, kern, i, m):
    aop = ctx.op(ctx.fam.a)
    lhs = ctx.plus(aop, ctx.S, ctx.S, i, m)
    rhs = ctx.plus(ctx.S, aop, aop, i, m)
    return lhs - rhs


def _row_sharp(ctx, kern, i, m):
    lhs = ctx.plus(ctx.op(kern["c_prime"]), ctx.S, ctx.S, i, m)
    bop = ctx.op(kern["b"])
    rhs = ctx.translated(ctx.S, bop, i, m) - ctx.translated(bop, ctx.S, i, m)
    return lhs - rhs


def _row_semigroup_aa(ctx, kern, i, m):
    j = np.arange(1, m + 1)
    return ctx.V[i + j - 1] + ctx.plus(ctx.op(kern["c_prime"]), ctx.S, ctx.S, i, m)


def _row_superdiff(ctx, kern, i, m):
    P, Pop = ctx.P
    Q, _ = ctx.conv(kern["c"])
    bop = ctx.op(kern["b"])
    lhs = ctx.translated(bop, Pop, i, m) - ctx.translated(Pop, bop, i, m)
    j = np.arange(1, m + 1)
    rhs = Q[i - 1] @ P[j - 1] + P[i - 1] @ Q[j - 1] - ctx.plus(ctx.op(kern["c"]), ctx.S, ctx.S, i, m)
    return lhs - rhs


def _row_cauchy(ctx, kern, i, m):
    j = np.arange(1, m + 1)
    return ctx.V[i - 1] @ ctx.V[j - 1] - ctx.V[i + j - 1]


def _row_cosine_integrated(ctx, kern, i, m):
    P, _ = ctx.P
    j = np.arange(1, m + 1)
    return ctx.V[i - 1] @ P[j - 1] + P[i - 1] @ ctx.V[j - 1] - P[i + j - 1]


def _row_dalembert(ctx, kern, i, m):
    j = np.arange(1, m + 1)
    return ctx.V[i + j - 1] + ctx.node(np.abs(i - j)) - 2.0 * ctx.V[i - 1] @ ctx.V[j - 1]


def _row_convoluted(ctx, kern, i, m):
    k = ctx.fam.k
    P, Pop = ctx.P
    j = np.arange(1, m + 1)
    t = ctx.fam.nodes
    k0 = complex(k.value_at_zero())
    k1 = kern["k_prime"]
    dk0 = complex(k1.value_at_zero())
    dk = np.asarray(k1(t), dtype=complex)
    rhs = (k0 * ctx.V[i + j - 1] + dk0 * P[i + j - 1]
           - dk[j - 1, None, None] * P[i - 1] - dk[i - 1] * P[j - 1])
    k2 = kern["k_second"]
    if k2.terms():
        k2op = ctx.op(k2)
        rhs = rhs + ctx.translated(k2op, Pop, i, m) - ctx.translated(Pop, k2op, i, m)
    return ctx.V[i - 1] @ ctx.V[j - 1] - rhs


def _row_eps_semigroup(ctx, kern, i, m):
    eps = kern["eps"]
    P, _ = ctx.P
    j = np.arange(1, m + 1)
    rhs = (1 - eps) * ctx.V[i + j - 1] + eps * (P[i + j - 1] - P[i - 1] - P[j - 1])
    return ctx.V[i - 1] @ ctx.V[j - 1] - rhs


def _row_eps_resolvent(ctx, kern, i, m):
    eps = kern["eps"]
    P, _ = ctx.P
    j = np.arange(1, m + 1)
    Si, Sj = ctx.V[i - 1], ctx.V[j - 1]
    lhs = (1 - eps) * (Si @ Sj - ctx.V[i + j - 1])
    if kern.get("uncorrected"):
        rhs = eps * (P[i + j - 1] - P[j - 1] - P[i - 1])
    else:
        rhs = eps * (P[i + j - 1] - Si @ P[j - 1] - Sj @ P[i - 1])
    return lhs - rhs


_ROWS = {
    "lizama_poblete": _row_lizama,
    "translation_ak": _row_translation_ak,
    "translation_aa": _row_translation_aa,
    "sharp_bc": _row_sharp,
    "semigroup_aa": _row_semigroup_aa,
    "superdiff_tk": _row_superdiff,
    "cauchy": _row_cauchy,
    "cosine_integrated": _row_cosine_integrated,
    "dalembert": _row_dalembert,
    "convoluted_k": _row_convoluted,
    "eps_semigroup": _row_eps_semigroup,
    "eps_resolvent": _row_eps_resolvent,
}


# ---------------------------------------------------------------------------
# lattice


def lattice(n: int, max_pairs: int = MAX_PAIRS, skip: int = 0):
    """Index pairs ``(i, j)`` with ``i + j <= n``, decimated by a common stride.

    ``skip`` drops pairs with ``min(i, j) <= skip``.  Returns ``(stride, rows)``
    where ``rows`` maps ``i`` to the array of its ``j``.
    """
    stride = 1
    while True:
        rows = {}
        count = 0
        for i in range(stride, n, stride):
            if i <= skip:
                continue
            j = np.arange(stride, n - i + 1, stride)
            j = j[j > skip]
            if j.size:
                rows[i] = j
                count += j.size
        if count <= max_pairs or stride >= n:
            return stride, rows
        stride += 1


def _rows_from_pairs(fam: SampledFamily, pairs):
    rows: dict = {}
    T = fam.grid.T
    for t, s in pairs:
        if t + s > T * (1 + 1e-12):
            raise IntervalExceeded(f"t + s = {t + s:g} exceeds the family interval (0, {T:g}]")
        i, j = fam.grid.node_index(t), fam.grid.node_index(s)
        if i < 1 or j < 1:
            raise IntervalExceeded("t and s must be positive")
        rows.setdefault(i, []).append(j)
    return {i: np.array(sorted(set(js))) for i, js in rows.items()}


def _probe_norms(R, P):
    """Operator 2-norms and per-probe vector norms of residual matrices (p, d, d)."""
    op = np.linalg.norm(R, ord=2, axis=(1, 2)) if R.shape[1] > 1 else np.abs(R[:, 0, 0])
    per = np.linalg.norm(np.einsum("iab,bp->iap", R, P), axis=1)
    return op, per


def check(case: EquationCase | str, fam: SampledFamily, probes=None, *, tol: float = 1e-4,
          pairs=None, max_pairs: int = MAX_PAIRS, skip: int = 0) -> ResidualReport:
    """Residual of one functional equation over a lattice of ``(t, s)`` pairs.

    Parameters
    ----------
    case : EquationCase or str
        Equation id (with auxiliary kernels and parameters).
    fam : SampledFamily
        The family; its pair must satisfy the equation's validity predicate.
    probes : array, optional
        Probe vectors as columns (default: basis plus one random vector).
    tol : float
        Tolerance on the residual relative to ``max(1, max ||S||)``.
    pairs : iterable of (t, s), optional
        Explicit node pairs instead of the decimated lattice.
    skip : int
        Drop lattice pairs with ``min(i, j) <= skip`` (singular first cells).

    Returns
    -------
    ResidualReport
        Operator-norm residuals per pair, locations ``(t, s)``, per-probe
        maxima and the normalization trend in the metadata.
    """
    if isinstance(case, str):
        case = EquationCase(case)
    kern = case.resolve(fam)
    kern.update({k: v for k, v in case.params.items() if k not in kern})
    if case.id == "defining_volterra":
        rep = volterra_residual(fam, probes, tol=tol)
        rep.name = case.id
        return rep
    if case.id == "rof_translation":
        return _check_rof(case, fam, kern, probes, tol, pairs, max_pairs, skip)
    return _run_rows(case.id, _ROWS[case.id], fam, kern, probes, tol, pairs, max_pairs, skip)


def _run_rows(name, row_fn, fam, kern, probes, tol, pairs, max_pairs, skip, extra_meta=None):
    P = default_probes(fam.d) if probes is None else np.asarray(probes, dtype=complex).reshape(fam.d, -1)
    if pairs is not None:
        stride, rows = None, _rows_from_pairs(fam, pairs)
    else:
        stride, rows = lattice(fam.grid.n, max_pairs, skip)
    ctx = _Context(fam)
    h = fam.h
    res, per, locs = [], [], []
    for i, js in rows.items():
        m = int(js.max())
        R = row_fn(ctx, kern, i, m)[js - 1]
        op, pp = _probe_norms(R, P)
        res.append(op)
        per.append(pp)
        locs.append(np.stack([np.full(js.size, i * h), js * h], axis=1))
    res = np.concatenate(res) if res else np.zeros(0)
    per = np.concatenate(per) if per else np.zeros((0, P.shape[1]))
    locs = np.concatenate(locs) if locs else np.zeros((0, 2))
    t_used = sorted({int(i) for i in rows} | {int(j) for js in rows.values() for j in js})
    scale = float(np.max(np.linalg.norm(fam.values[np.array(t_used) - 1], ord=2, axis=(1, 2)))) if t_used else 1.0
    meta = {
        "grid": fam.grid.text(),
        "pair": [fam.a.text(), fam.k.text()],
        "stride": stride,
        "pairs": int(res.size),
        "probe_max": per.max(axis=0).tolist() if per.size else [],
        "normalization_trend": fam.normalization_trend().tolist(),
    }
    meta.update({k: (v.text() if isinstance(v, Kernel) else v) for k, v in kern.items()})
    if extra_meta:
        meta.update(extra_meta)
    return ResidualReport(name, res, tol, locations=locs, scale=scale, metadata=meta)


# ---------------------------------------------------------------------------
# (alpha, beta) translation formula with the power weight (t+s-r1-r2)^(-1-alpha)


class _PowerWeight(quad.Operand):
    """``r -> r**p`` (only its small-``r`` exponent matters to the moment guard)."""

    def __init__(self, p: float, h: float):
        self.p = float(p)
        self.h = float(h)
        self.d = 1
        self.extent = math.inf

    def at(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return (r**self.p).astype(complex).reshape(-1, 1, 1)

    def terms(self):
        return [(np.array([[self.h**self.p + 0j]]), self.p)]


def _check_rof(case, fam, kern, probes, tol, pairs, max_pairs, skip):
    """``(int_t^{t+s} - int_0^s) (t+s-r)^(beta-alpha) S(r) dr
    = alpha Gamma(beta-alpha+1)/Gamma(1-alpha) int int S(r1) S(r2) (t+s-r1-r2)^(-1-alpha)``.

    The right-hand weight has a corner moment only for ``alpha < 1``; the
    quadrature's moment guard is consulted first and a divergent moment is
    reported as a flag instead of a number.
    """
    alpha, beta = kern["alpha"], kern["beta"]
    try:
        quad._check_weight_exponents(_PowerWeight(-1.0 - alpha, fam.h))
    except NotIntegrable as exc:
        return ResidualReport(
            case.id, np.array([np.inf]), tol,
            metadata={"alpha": alpha, "beta": beta, "reason": str(exc), "grid": fam.grid.text()},
            flags=["divergent-moment"],
        )
    const = alpha * math.gamma(beta - alpha + 1) / math.gamma(1 - alpha)

    def row(ctx, _kern, i, m):
        w = _PowerWeight(beta - alpha, ctx.h)
        # (int_t^{t+s} - int_0^s) w(t+s-r) S(r) dr = w * S_t (s) - w_t * S (s)
        lhs = ctx.translated(w, ctx.S, i, m) - ctx.translated(ctx.S, w, i, m)
        rhs = const * ctx.plus(_PowerWeight(-1.0 - alpha, ctx.h), ctx.S, ctx.S, i, m)
        return lhs - rhs

    return _run_rows(case.id, row, fam, kern, probes, tol, pairs, max_pairs, skip)


# ---------------------------------------------------------------------------
# negative controls and refinement


def detect_violation(case: EquationCase | str, fam: SampledFamily, eps: float = PERTURB_EPS[-1],
                     probes=None, **kwargs) -> ResidualReport:
    """Residual of ``case`` on ``S + eps I``, with a two-point slope in ``eps``.

    The metadata carry the residuals at ``eps`` in ``{1e-3, 1e-2}``, their
    ratio and the log-log slope; a genuine family gives a slope near one.
    """
    rep = check(case, fam.perturbed(eps) if eps else fam, probes, **kwargs)
    lo, hi = (check(case, fam.perturbed(e), probes, **kwargs).max for e in PERTURB_EPS)
    ratio = hi / lo if lo > 0 else math.inf
    rep.metadata.update({
        "perturbation": eps,
        "slope_points": list(PERTURB_EPS),
        "slope_residuals": [lo, hi],
        "ratio": ratio,
        "slope": math.log10(ratio) if np.isfinite(ratio) and ratio > 0 else math.nan,
    })
    return rep


def coarsen(fam: SampledFamily, factor: int = 2) -> SampledFamily:
    """Every ``factor``-th node of ``fam`` on the coarser grid over the same interval."""
    n = fam.grid.n
    if n % factor:
        raise ValidityViolation(f"grid size {n} is not divisible by {factor}")
    g = Grid(fam.grid.T, n // factor)
    return fam._replace(grid=g, values=fam.values[factor - 1::factor])


def refinement_order(case: EquationCase | str, fam: SampledFamily, floor: float = 1e-12, **kwargs):
    """Observed order ``log2(r(h2)/r(h))`` from ``fam`` and its 2x coarsening.

    Returns ``None`` when the fine residual is already at roundoff level.
    """
    fine = check(case, fam, **kwargs).max
    rough = check(case, coarsen(fam), **kwargs).max
    if fine <= floor or rough <= floor:
        return None
    return math.log2(rough / fine)
