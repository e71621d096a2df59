"""Numeric Laplace transforms in one and two variables, and transform identities.

``laplace1`` integrates ``e^{-lam t} f(t)`` with the singular first cell of
``f`` handled by Gauss-Jacobi moments.  ``laplace2`` is a nested quadrature
that knows nothing about the structure of the field: it is the independent
side of every identity checked here, the other side being built from
closed-form one-variable transforms.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import _quadrature as quad
from .bivar import BivarField, Minus, Plus, Tensor, _resolve_step, conv2, graded_rule
from .errors import AbscissaViolation, DegenerateRequest, GridMismatch, HypothesisViolation, NoClosedForm, NonEvaluable
from .kernels import Constant, Convolution, Exponential, Grid, Kernel, PowerLaw, SampledValues, conv1
from .report import ResidualReport, combine

DEFAULT_POINTS = ((1.0, 2.0), (2.0, 1.0), (1.0, 4.0), (1.5, 3.0), (2.0 + 1.0j, 3.0 - 0.5j), (3.0, 1.2))


@dataclass(frozen=True)
class TransformValue:
    value: complex
    truncation: float
    T_max: float

    def __complex__(self):
        return complex(self.value)


def _abscissa(f) -> float:
    if isinstance(f, Kernel) and f.has_closed_form:
        return float(f.abscissa)
    return -math.inf


def default_T_max(lam, T: float = 1.0) -> float:
    return max(40.0 / max(np.real(lam), 1e-12), 10.0 * T)


def laplace1(f, lam, T_max: float | None = None, full: bool = False, cells: int | None = None):
    """``int_0^{T_max} e^{-lam t} f(t) dt``.

    ``f`` is a kernel or sampled values (then the integral stops at the end
    of the samples).  With ``full`` a :class:`TransformValue` carrying a
    truncation estimate ``|f(T_max)| e^{-Re lam T_max} / (Re lam - omega)``
    is returned.
    """
    lam = complex(lam)
    omega = _abscissa(f)
    if not np.real(lam) > omega:
        raise AbscissaViolation(f"Re lambda = {lam.real:g} must exceed the abscissa {omega:g}")
    if isinstance(f, SampledValues):
        T_max = f.T
        n = f.n
        h = f.h
        op = quad.SampledOperand(f)
    else:
        T_max = default_T_max(lam) if T_max is None else float(T_max)
        n = cells or max(512, int(math.ceil(2.0 * abs(lam) * T_max)))
        h = T_max / n
        op = quad.as_operand(f, h)
    xi, w = quad.gauss_legendre01(quad.GL_Q)
    a = np.arange(1, n)
    t = ((a[:, None] + xi[None, :]) * h).ravel()
    vals = op.at(t)[:, 0, 0] if op.d == 1 else op.at(t)
    e = np.exp(-lam * t)
    wt = np.tile(w, n - 1) * h * e
    total = np.tensordot(wt, vals, axes=(0, 0))
    x0, w0, v0 = quad.cell0_rule(op)
    e0 = np.exp(-lam * x0 * h) * w0 * h
    total = total + np.tensordot(e0, v0[:, 0, 0] if op.d == 1 else v0, axes=(0, 0))
    if not full:
        return complex(total) if np.ndim(total) == 0 else total
    tail = np.abs(op.at(np.array([T_max]))).max()
    denom = max(lam.real - max(omega, 0.0), 1e-12)
    return TransformValue(complex(total) if np.ndim(total) == 0 else total, float(tail * math.exp(-lam.real * T_max) / denom), T_max)


GRADE_LEVELS = 14


def _unit_graded(q, toward):
    """Graded rule on ``[0, 1]`` toward 0, 1 or both ends."""
    if toward == "both":
        x, w = graded_rule(1.0, 1.0, q=q, levels=GRADE_LEVELS)
    else:
        x, w = graded_rule(1.0, 1.0, q=q, levels=GRADE_LEVELS, ends=(toward == "left", toward == "right"))
    return x, w


@functools.lru_cache(maxsize=32)
def _laplace2_nodes(T_max: float, cell: float, q: int):
    """Flattened ``(t, s, weight)`` nodes of the nested rule used by :func:`laplace2`."""
    u, wu = graded_rule(T_max, cell, q=q, levels=GRADE_LEVELS, ends=(True, False))
    tail_x, tail_w = u, wu
    xb, wb = _unit_graded(q, "both")
    xl, wl = _unit_graded(q, "left")
    xr, wr = _unit_graded(q, "right")
    gx, gw = np.polynomial.legendre.leggauss(q)
    gx, gw = 0.5 * (gx + 1.0), 0.5 * gw
    vs, ws, owner = [], [], []
    for i, ui in enumerate(u):
        k = max(1, int(math.ceil(ui / cell - 1e-12)))
        hc = ui / k
        if k == 1:
            v1, w1 = xb * ui, wb * ui
        else:
            mid = (np.arange(1, k - 1)[:, None] + gx[None, :]).ravel() * hc
            v1 = np.concatenate([xl * hc, mid, ui - hc + xr * hc])
            w1 = np.concatenate([wl * hc, np.tile(gw, k - 2) * hc, wr * hc])
        vs += [v1, ui + tail_x]
        ws += [w1, tail_w]
        owner.append(np.full(v1.size + tail_x.size, i))
    own = np.concatenate(owner)
    uu = u[own]
    w = wu[own] * np.concatenate(ws)
    v = np.concatenate(vs)
    for arr in (uu, v, w):
        arr.setflags(write=False)
    return uu, v, w


def laplace2(F: BivarField, lam, mu, T_max: float | None = None, cell: float | None = None, q: int = 6) -> complex:
    """``int_0^{T_max} int_0^{T_max} e^{-lam t - mu s} F(t, s) ds dt`` by nested graded quadrature.

    The inner rule is split at ``s = t`` and graded into both ends of each
    piece, so corner singularities (sum lifts) and diagonal singularities
    (difference lifts) are both resolved.  The inner tail ``[t, t + T_max]``
    reuses one shifted rule; the part beyond ``T_max`` only adds to the
    negligible truncated mass.
    """
    lam, mu = complex(lam), complex(mu)
    if isinstance(F, (Plus, Minus)):
        src = F.source
        omega = _abscissa(src) if isinstance(src, Kernel) else -math.inf
    elif isinstance(F, Tensor):
        omega = max(_abscissa(F.f) if isinstance(F.f, Kernel) else -math.inf, _abscissa(F.g) if isinstance(F.g, Kernel) else -math.inf)
    else:
        omega = -math.inf
    if not (lam.real > omega and mu.real > omega):
        raise AbscissaViolation(f"need Re lambda, Re mu > {omega:g}")
    if isinstance(F, Minus) and not (lam + mu).real > 0:
        raise AbscissaViolation("difference lifts need Re(lambda + mu) > 0")
    if T_max is None:
        T_max = 32.0 / min(lam.real, mu.real)
        ext = getattr(F, "values", None)
        if ext is not None:
            T_max = min(T_max, F.h * ext.shape[0])
    cell = cell or min(0.5, 2.0 / max(abs(lam), abs(mu), 1.0))
    uu, v, w = _laplace2_nodes(float(T_max), float(cell), int(q))
    vals = np.asarray(F(uu, v))
    contrib = w * np.exp(-lam * uu - mu * v) * vals
    return complex(np.sum(contrib))


def exp_weights(n: int, h: float, lam) -> np.ndarray:
    """Weights ``w_i`` with ``int_0^{n h} e^{-lam t} phi(t) dt ~ sum_i w_i phi(i h)``, ``i = 0..n``.

    ``phi`` is modelled by local cubics through four nodes; the exponential
    is integrated exactly up to Gauss-Legendre error.
    """
    lam = complex(lam)
    xi, gw = np.polynomial.legendre.leggauss(10)
    xi = 0.5 * (xi + 1.0)
    gw = 0.5 * gw
    deg = min(3, n)
    k = np.arange(n)
    base = np.clip(k - 1, 0, n - deg)
    offs = np.arange(deg + 1)
    w = np.zeros(n + 1, dtype=complex)
    e_loc = np.exp(-lam * xi * h) * gw * h
    for shift in np.unique(k - base):
        x = shift + xi  # position inside the 4-node stencil
        L = np.ones((xi.size, deg + 1))
        for j in offs:
            for m in offs:
                if m != j:
                    L[:, j] *= (x - m) / (j - m)
        cw = e_loc @ L  # (deg+1,)
        sel = k[k - base == shift]
        scale = np.exp(-lam * sel * h)
        np.add.at(w, (base[sel][:, None] + offs[None, :]).ravel(), (scale[:, None] * cw[None, :]).ravel())
    return w


def laplace2_tabulated(values, h: float, lam, mu) -> complex:
    """Double transform of node values ``values[i-1, j-1] = H(i h, j h)`` with ``H = 0`` on the axes."""
    v = np.asarray(values, dtype=complex)
    nt, ns = v.shape[:2]
    full = np.zeros((nt + 1, ns + 1) + v.shape[2:], dtype=complex)
    full[1:, 1:] = v
    wt = exp_weights(nt, h, lam)
    ws = exp_weights(ns, h, mu)
    return np.einsum("i,j,ij...->...", wt, ws, full)


# ---------------------------------------------------------------------------
# identity suite


def _hat(f: Kernel, lam):
    return complex(f.laplace(lam))


def _c_zero(c: Kernel) -> complex:
    v = c.value_at_zero()
    return complex(v)


def _residual(name, lhs, rhs, tol, point, **meta):
    err = abs(complex(lhs) - complex(rhs))
    return ResidualReport(name, [err], tol, locations=np.array([point]), scale=1.0,
                          metadata=dict(lhs=complex(lhs), rhs=complex(rhs), **meta))


def _tol_for(*kernels) -> float:
    for k in kernels:
        if np.isfinite(k.singularity_exponent) and not float(k.singularity_exponent).is_integer():
            return 1e-4
        if k.singularity_exponent < 0:
            return 1e-4
    return 1e-6


DEFAULT_CASES = {
    "f": (Exponential(1.0), PowerLaw(0.5), Constant(1.0)),
    "tensor": ((Exponential(1.0), PowerLaw(0.5)), (Constant(1.0), Exponential(2.0))),
    "c_plus": (PowerLaw(0.5), Exponential(1.0), PowerLaw(2.0)),
    "c_minus": (PowerLaw(2.0), Exponential(1.0), PowerLaw(1.5)),
}


def check_transform_suite(points=DEFAULT_POINTS, cases: dict | None = None, families: bool = False,
                          tol: float | None = None) -> ResidualReport:
    """Double-transform identities for sum, difference and tensor lifts.

    Parts: ``conv2(i)`` sum lift, ``conv2(ii)`` difference lift, ``conv2(iii)``
    tensor product, ``conv2(iv)`` product rule for ``*2``, ``cor31(i)`` and
    ``cor31(ii)`` for lifted derivatives ``c'``.  With ``families`` the
    two-variable convolution against ``S (x) S`` is checked as well.
    Each residual is ``|LHS - RHS|``; left sides use :func:`laplace2`.
    """
    cases = {**DEFAULT_CASES, **(cases or {})}
    parts = {}
    for (lam, mu) in points:
        lam, mu = complex(lam), complex(mu)
        if lam == mu:
            raise DegenerateRequest("lambda = mu: the sum-lift identities need distinct points")
        pt = (lam, mu)
        tag = f"({_fmt(lam)},{_fmt(mu)})"
        for f in cases["f"]:
            t_ = tol or _tol_for(f)
            lhs = laplace2(Plus(f), lam, mu)
            rhs = (_hat(f, lam) - _hat(f, mu)) / (mu - lam)
            parts[f"conv2(i)[{f.text()}]{tag}"] = _residual("conv2(i)", lhs, rhs, t_, pt)
            lhs = laplace2(Minus(f), lam, mu)
            rhs = (_hat(f, lam) + _hat(f, mu)) / (lam + mu)
            parts[f"conv2(ii)[{f.text()}]{tag}"] = _residual("conv2(ii)", lhs, rhs, t_, pt)
        for f, g in cases["tensor"]:
            t_ = tol or _tol_for(f, g)
            lhs = laplace2(Tensor(f, g), lam, mu)
            rhs = _hat(f, lam) * _hat(g, mu)
            parts[f"conv2(iii)[{f.text()},{g.text()}]{tag}"] = _residual("conv2(iii)", lhs, rhs, t_, pt)
        for c in cases["c_plus"]:
            cp = c.derivative()
            t_ = tol or _tol_for(cp)
            lhs = laplace2(Plus(cp), lam, mu)
            rhs = (lam * _hat(c, lam) - mu * _hat(c, mu)) / (mu - lam)
            parts[f"cor31(i)[{c.text()}]{tag}"] = _residual("cor31(i)", lhs, rhs, t_, pt)
        for c in cases["c_minus"]:
            cp = c.derivative()
            t_ = tol or _tol_for(cp)
            lhs = laplace2(Minus(cp), lam, mu)
            rhs = (lam * _hat(c, lam) + mu * _hat(c, mu)) / (lam + mu) - 2 * _c_zero(c) / (lam + mu)
            parts[f"cor31(ii)[{c.text()}]{tag}"] = _residual("cor31(ii)", lhs, rhs, t_, pt)
    # product rule for *2 on one point (tabulated left side)
    lam, mu = complex(points[0][0]), complex(points[0][1])
    parts["conv2(iv)"] = check_product_rule(Tensor(Exponential(1.0), Exponential(2.0)),
                                            Tensor(Exponential(1.5), Constant(1.0)), lam + 1, mu + 1, tol=tol or 1e-4)
    if families:
        parts.update(check_family_transforms(lam=lam + 1, mu=mu + 1))
    return combine("transform_suite", parts, tol or 1e-4, points=[(_fmt(a), _fmt(b)) for a, b in points])


def _fmt(z: complex) -> str:
    z = complex(z)
    return f"{z.real:g}" if z.imag == 0 else f"{z.real:g}{z.imag:+g}i"


def _tabulate_conv2(F, G, h, n):
    """``(F *2 G)`` on the ``n x n`` node grid of step ``h``."""
    if isinstance(F, Tensor) and isinstance(G, Tensor):
        # (f (x) g) *2 (h (x) j) = (f*h) (x) (g*j), each factor by product integration
        grid = Grid(n * h, n)
        a = conv1(F.f, G.f, grid).node_values().reshape(n, -1)[:, 0]
        b = conv1(F.g, G.g, grid).node_values().reshape(n, -1)[:, 0]
        return np.outer(a, b)
    vals = np.zeros((n, n), dtype=complex)
    for i in range(1, n + 1):
        if isinstance(F, Plus) and isinstance(G, Tensor):
            from .bivar import _operand

            row = quad.plus_rows(_operand(F.source, h), _operand(G.f, h), _operand(G.g, h), i, n)
            vals[i - 1] = row[:, 0, 0]
        else:
            for j in range(1, n + 1):
                vals[i - 1, j - 1] = conv2(F, G, i * h, j * h, h)
    return vals


def check_product_rule(F: BivarField, G: BivarField, lam, mu, T_max: float = 24.0, h: float = 0.1,
                       tol: float = 1e-4) -> ResidualReport:
    """``L2(F *2 G) = L2(F) L2(G)`` with the left side from tabulated ``F *2 G``."""
    n = int(round(T_max / h))
    H = _tabulate_conv2(F, G, h, n)
    lhs = laplace2_tabulated(H, h, lam, mu)
    rhs = laplace2(F, lam, mu) * laplace2(G, lam, mu)
    return _residual("conv2(iv)", lhs, rhs, tol, (lam, mu), truncation=float(math.exp(-min(np.real(lam), np.real(mu)) * T_max)))


def check_family_transforms(S: Kernel | None = None, g: Kernel = Exponential(2.0), c: Kernel = PowerLaw(0.5),
                            lam=2.0, mu=3.0, T_max: float = 8.0, h: float = 0.125, tol: float = 1e-4) -> dict:
    """Transforms of ``g+ *2 (S (x) S)`` and ``(c')+ *2 (S (x) S)`` against closed forms.

    The default ``S(t) = t e^{-t}`` vanishes at the origin, which keeps the
    tabulated double convolution smooth near the axes.
    """
    S = S if S is not None else Convolution(Exponential(1.0), Exponential(1.0))
    lam, mu = complex(lam), complex(mu)
    n = int(round(T_max / h))
    SS = Tensor(S, S)
    out = {}
    H = _tabulate_conv2(Plus(g), SS, h, n)
    lhs = laplace2_tabulated(H, h, lam, mu)
    rhs = (_hat(g, lam) - _hat(g, mu)) / (mu - lam) * _hat(S, lam) * _hat(S, mu)
    out["sum_lift_transform"] = _residual("sum_lift_transform", lhs, rhs, tol, (lam, mu))
    H = _tabulate_conv2(Plus(c.derivative()), SS, h, n)
    lhs = laplace2_tabulated(H, h, lam, mu)
    rhs = (lam * _hat(c, lam) - mu * _hat(c, mu)) / (mu - lam) * _hat(S, lam) * _hat(S, mu)
    out["derivative_lift_transform"] = _residual("derivative_lift_transform", lhs, rhs, tol, (lam, mu))
    return out


# ---------------------------------------------------------------------------
# inversion


def _check_unit_pair(a: Kernel, c: Kernel, grid: Grid, tol: float) -> float:
    try:
        if Convolution(a, c).same_as(Constant(1.0)):
            return 0.0
    except NoClosedForm:
        pass
    vals = conv1(a, c, grid).node_values().reshape(grid.n, -1)[:, 0]
    err = float(np.max(np.abs(vals - 1.0)))
    if err > tol:
        raise HypothesisViolation(f"a*c = 1 fails: max deviation {err:.3e}")
    return err


def check_inversion_le34(a: Kernel, c: Kernel, grid: Grid, part: str = "i", points=None,
                         tol: float = 1e-3, pair_tol: float = 1e-3) -> ResidualReport:
    """Residual of ``a+ = -((c')+ *2 (a (x) a))`` (part i) or ``a- = (c')- *2 (a (x) a)`` (part ii).

    ``points`` are ``(t, s)`` node pairs; by default all pairs of grid nodes.
    The weight ``c'`` is read at positive arguments only; its singular
    expansion at the corner is integrated analytically.
    """
    if part not in ("i", "ii"):
        raise ValueError("part is 'i' or 'ii'")
    pair_err = _check_unit_pair(a, c, grid, pair_tol)
    if part == "ii":
        c0 = abs(complex(c.value_at_zero()))
        if not c0 <= pair_tol:
            raise HypothesisViolation(f"part (ii) needs c(0+) = 0, got {c0:g}")
    cp = c.derivative()
    h = grid.h
    if points is None:
        nodes = grid.nodes
        points = [(t, s) for t in nodes for s in nodes]
    res, locs, rel = [], [], []
    w = quad.KernelOperand(cp, h)
    Aop = quad.as_operand(a, h)
    rows = {}
    for t, s in points:
        _, N, Mn = _resolve_step(Plus(a), Plus(a), t, s, h)
        if part == "i":
            key = N
            if key not in rows:
                rows[key] = quad.plus_rows(w, Aop, Aop, N, max(int(round(p[1] / h)) for p in points if int(round(p[0] / h)) == N))
            lhs = -rows[key][Mn - 1, 0, 0]
            rhs = complex(a(t + s))
        else:
            lhs = conv2(Minus(cp), Tensor(a, a), t, s, h)
            rhs = complex(a(abs(t - s))) if t != s else complex("nan")
        err = abs(lhs - rhs)
        res.append(err)
        rel.append(err / max(abs(rhs), 1e-300))
        locs.append((t, s))
    return ResidualReport(f"le34({part})", rel, tol, locations=np.array(locs),
                          metadata={"absolute": res, "pair_check": pair_err, "h": h})


def scalar_inversion_lhs(alpha: float, t: float, s: float, n: int) -> complex:
    """Left side of the scalar inversion identity at ``(t, s)``.

    ``(alpha sin(alpha pi) / pi) int_0^t int_0^s u^(alpha-1) v^(alpha-1)
    (t+s-u-v)^(-alpha-1) dv du``, which should equal ``(t+s)^(alpha-1)``.
    It is computed as ``-Gamma(alpha) ((g_{-alpha})+ *2 (g_alpha (x) g_alpha))(t, s)``
    on the grid ``h = max(t, s) / n``.
    """
    h = max(t, s) / n
    a = PowerLaw(alpha)
    cp = PowerLaw(1.0 - alpha).derivative()
    N, Mn = int(round(t / h)), int(round(s / h))
    if abs(N * h - t) > 1e-12 or abs(Mn * h - s) > 1e-12:
        raise GridMismatch("t and s must be multiples of max(t, s)/n")
    val = quad.plus_rows(quad.KernelOperand(cp, h), quad.KernelOperand(a, h), quad.KernelOperand(a, h), N, Mn)[-1, 0, 0]
    return -math.gamma(alpha) * complex(val)
