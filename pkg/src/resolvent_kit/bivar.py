"""Functions of two variables and the double convolution.

``F *2 G (t, s) = int_0^t int_0^s F(t-u, s-v) G(u, v) dv du``.

Fields built from one-variable sources:

* ``Plus(f)(t, s) = f(t + s)``
* ``Minus(f)(t, s) = f(|t - s|)``
* ``Tensor(f, g)(t, s) = f(t) g(s)``
* ``Tabulated2D``: node values on a square grid.

Sources are kernels, sampled values or sampled families.  Matrix-valued
products are taken left to right; the families of this package commute with
each other, so the order only matters for diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import _quadrature as quad
from .errors import DomainError, GridMismatch, NoClosedForm, NonEvaluable
from .kernels import Convolution, Grid, Kernel, SampledValues, conv1
from .report import ResidualReport, combine

DEFAULT_CELLS = 64


# ---------------------------------------------------------------------------
# sources


def _eval_source(src, r) -> np.ndarray:
    """Values of a one-variable source at ``r`` as (len, d, d)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros((r.size, _source_dim(src), _source_dim(src)), dtype=complex)
    pos = r > 0
    if np.any(pos):
        if isinstance(src, Kernel):
            out[pos] = np.asarray(src(r[pos]), dtype=complex).reshape(-1, 1, 1)
        elif isinstance(src, SampledValues):
            out[pos] = src.values_at(r[pos])
        elif hasattr(src, "sampled"):
            out[pos] = src.at(r[pos])
        elif callable(src):
            out[pos] = np.asarray(src(r[pos]), dtype=complex).reshape(int(pos.sum()), out.shape[1], out.shape[2])
        else:
            raise TypeError(f"unsupported source {type(src).__name__}")
    return out


def _source_dim(src) -> int:
    if isinstance(src, Kernel):
        return 1
    if isinstance(src, SampledValues):
        return src.d
    if hasattr(src, "d"):
        return src.d
    return 1


def _source_step(src):
    if isinstance(src, SampledValues):
        return src.h
    if hasattr(src, "sampled"):
        return src.h
    return None


@dataclass(frozen=True)
class Translate:
    """``f_t(s) = f(s + t)``, defined for ``s > -t``."""

    source: object
    t: float

    def __call__(self, s):
        return _eval_source(self.source, np.asarray(s, dtype=float) + self.t)


def M(source):
    """``M(f)(s) = s f(s)`` as a callable."""
    return lambda s: np.asarray(s, dtype=float)[:, None, None] * _eval_source(source, s)


# ---------------------------------------------------------------------------
# fields


class BivarField:
    kind = "field"

    def __call__(self, t, s):
        raise NotImplementedError

    @property
    def d(self) -> int:
        return 1

    def step(self):
        return None

    def _squeeze(self, out, scalar_in):
        if self.d == 1:
            out = out[..., 0, 0]
        return out[0] if scalar_in else out


@dataclass(frozen=True)
class Plus(BivarField):
    source: object
    kind = "plus"

    def __call__(self, t, s):
        t, s = np.broadcast_arrays(np.atleast_1d(np.asarray(t, float)), np.atleast_1d(np.asarray(s, float)))
        out = _eval_source(self.source, (t + s).ravel()).reshape(t.shape + (self.d, self.d))
        return self._squeeze(out, np.ndim(t) == 1 and t.size == 1)

    @property
    def d(self):
        return _source_dim(self.source)

    def step(self):
        return _source_step(self.source)


@dataclass(frozen=True)
class Minus(BivarField):
    source: object
    kind = "minus"

    def __call__(self, t, s):
        t, s = np.broadcast_arrays(np.atleast_1d(np.asarray(t, float)), np.atleast_1d(np.asarray(s, float)))
        out = _eval_source(self.source, np.abs(t - s).ravel()).reshape(t.shape + (self.d, self.d))
        return self._squeeze(out, np.ndim(t) == 1 and t.size == 1)

    @property
    def d(self):
        return _source_dim(self.source)

    def step(self):
        return _source_step(self.source)


@dataclass(frozen=True)
class Tensor(BivarField):
    f: object
    g: object
    kind = "tensor"

    def __call__(self, t, s):
        t, s = np.broadcast_arrays(np.atleast_1d(np.asarray(t, float)), np.atleast_1d(np.asarray(s, float)))
        ft = _eval_source(self.f, t.ravel())
        gs = _eval_source(self.g, s.ravel())
        d = self.d
        out = np.einsum("rab,rbc->rac", _bc(ft, d), _bc(gs, d)).reshape(t.shape + (d, d))
        return self._squeeze(out, np.ndim(t) == 1 and t.size == 1)

    @property
    def d(self):
        return max(_source_dim(self.f), _source_dim(self.g))

    def step(self):
        return _source_step(self.f) or _source_step(self.g)


class Tabulated2D(BivarField):
    """Node values ``values[i-1, j-1] = F(i h, j h)``; cubic interpolation in between."""

    kind = "tabulated"

    def __init__(self, h: float, values, corner=None):
        v = np.asarray(values, dtype=complex)
        if v.ndim == 2:
            v = v[:, :, None, None]
        self.h = float(h)
        self.values = v
        nt, ns = v.shape[:2]
        ti = self.h * np.arange(1, nt + 1)
        si = self.h * np.arange(1, ns + 1)
        method = "cubic" if min(nt, ns) >= 4 else "linear"
        flat = v.reshape(nt, ns, -1)
        self._re = RegularGridInterpolator((ti, si), flat.real, method=method, bounds_error=False, fill_value=None)
        self._im = RegularGridInterpolator((ti, si), flat.imag, method=method, bounds_error=False, fill_value=None)

    @property
    def d(self):
        return self.values.shape[-1]

    def step(self):
        return self.h

    def __call__(self, t, s):
        t, s = np.broadcast_arrays(np.atleast_1d(np.asarray(t, float)), np.atleast_1d(np.asarray(s, float)))
        pts = np.stack([t.ravel(), s.ravel()], axis=-1)
        out = (self._re(pts) + 1j * self._im(pts)).reshape(t.shape + (self.d, self.d))
        return self._squeeze(out, np.ndim(t) == 1 and t.size == 1)

    @classmethod
    def from_field(cls, field: BivarField, grid: Grid) -> "Tabulated2D":
        t = grid.nodes
        T, S = np.meshgrid(t, t, indexing="ij")
        vals = field(T, S)
        return cls(grid.h, vals)


def _bc(v, d):
    return v if v.shape[-1] == d else v * np.eye(d)


# ---------------------------------------------------------------------------
# double convolution


def _resolve_step(F, G, t, s, h):
    if h is None:
        h = F.step() or G.step()
    if h is None:
        frac = Fraction(t / s).limit_denominator(DEFAULT_CELLS)
        if abs(frac.numerator * s - frac.denominator * t) > 1e-9 * max(t, s):
            raise GridMismatch(f"(t, s) = ({t}, {s}) share no grid step")
        base = t / frac.numerator
        h = base / math.ceil(DEFAULT_CELLS / max(frac.numerator, frac.denominator))
    for x, name in ((t, "t"), (s, "s")):
        r = x / h
        if abs(r - round(r)) > 1e-8 * max(1.0, r) or round(r) < 1:
            raise GridMismatch(f"{name}={x} is not a node of step {h}")
    return float(h), int(round(t / h)), int(round(s / h))


def _operand(src, h):
    if callable(src) and not isinstance(src, (Kernel, SampledValues)) and not hasattr(src, "sampled"):
        return quad.CallableOperand(lambda r: _eval_source(src, r), h, _source_dim(src))
    return quad.as_operand(src, h)


def conv2(F: BivarField, G: BivarField, t: float, s: float, h: float | None = None):
    """``(F *2 G)(t, s)``.

    Dispatch: ``Plus * Tensor`` and ``Minus * Tensor`` use the one-variable
    engines; ``Tensor * Tensor`` factorizes; ``Plus * Plus`` goes through the
    sum variable ``sigma = u + v`` with line measure
    ``l(sigma) = min(sigma, t, s, t + s - sigma)``; anything else falls back
    to :func:`conv2_tensor_rule`.
    """
    h, N, Mn = _resolve_step(F, G, t, s, h)
    if isinstance(G, (Plus, Minus)) and not isinstance(F, (Plus, Minus)):
        F, G = G, F
    if isinstance(F, Plus) and isinstance(G, Tensor):
        w = _operand(F.source, h)
        out = quad.plus_rows(w, _operand(G.f, h), _operand(G.g, h), N, Mn)[-1]
    elif isinstance(F, Minus) and isinstance(G, Tensor):
        w = _operand(F.source, h)
        if Mn <= N:
            out = quad.minus_rows(w, _operand(G.f, h), _operand(G.g, h), N, Mn)[-1]
        else:
            out = quad.minus_rows(w, _operand(G.g, h), _operand(G.f, h), Mn, N)[-1]
    elif isinstance(F, Tensor) and isinstance(G, Tensor):
        a = quad.conv_point(_operand(F.f, h), _operand(G.f, h), N)
        b = quad.conv_point(_operand(F.g, h), _operand(G.g, h), Mn)
        d = max(a.shape[-1], b.shape[-1])
        out = _bc(a[None], d)[0] @ _bc(b[None], d)[0]
    elif isinstance(F, Plus) and isinstance(G, Plus):
        out = _plus_plus(_operand(F.source, h), _operand(G.source, h), N, Mn)
    else:
        out = conv2_tensor_rule(F, G, t, s, h)
    out = np.asarray(out)
    return complex(out[0, 0]) if out.shape[-1] == 1 else out


class _ClippedM(quad.Operand):
    """``r -> min(r, m) f(r)``: the sum-variable line measure near one end."""

    def __init__(self, op: quad.Operand, m: float):
        self.op, self.m = op, m
        self.h, self.d, self.extent = op.h, op.d, op.extent

    def at(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return np.minimum(r, self.m)[:, None, None] * self.op.at(r)

    def terms(self):
        return [(c * self.h, e + 1.0) for c, e in self.op.terms()]


def _plus_plus(X, Y, N, Mn):
    """``int_0^{t+s} X(t+s-sigma) Y(sigma) l(sigma) d sigma`` with ``l = min(sigma, m) + min(L-sigma, m) - m``."""
    h = X.h
    m = min(N, Mn) * h
    j = N + Mn
    p1 = quad.conv_point(X, _ClippedM(Y, m), j)
    p2 = quad.conv_point(_ClippedM(X, m), Y, j)
    p3 = quad.conv_point(X, Y, j)
    return p1 + p2 - m * p3


def graded_rule(L: float, h: float, q: int = 6, levels: int = 20, ratio: float = 0.2, ends=(True, True)):
    """Gauss rule on ``[0, L]``: cells of size ``h`` with geometric grading into each end.

    Resolves integrable endpoint singularities without knowing them.
    """
    x, w = np.polynomial.legendre.leggauss(q)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    n = max(1, int(round(L / h)))
    edges = np.linspace(0.0, L, n + 1)
    pieces = []
    for i in range(n):
        a, b = edges[i], edges[i + 1]
        left = ends[0] and i == 0
        right = ends[1] and i == n - 1
        if not (left or right):
            pieces.append((a, b))
            continue
        if left and right:
            mid = 0.5 * (a + b)
            pieces += _graded(a, mid, levels, ratio, toward=a) + _graded(mid, b, levels, ratio, toward=b)
        elif left:
            pieces += _graded(a, b, levels, ratio, toward=a)
        else:
            pieces += _graded(a, b, levels, ratio, toward=b)
    lo = np.array([p[0] for p in pieces])
    hi = np.array([p[1] for p in pieces])
    nodes = (lo[:, None] + (hi - lo)[:, None] * x[None, :]).ravel()
    weights = ((hi - lo)[:, None] * w[None, :]).ravel()
    return nodes, weights


def _graded(a, b, levels, ratio, toward):
    width = b - a
    cuts = width * ratio ** np.arange(levels + 1)
    out = []
    for k in range(levels):
        if toward == a:
            out.append((a + cuts[k + 1], a + cuts[k]))
        else:
            out.append((b - cuts[k], b - cuts[k + 1]))
    out.append((a, a + cuts[-1]) if toward == a else (b - cuts[-1], b))
    return out


def conv2_tensor_rule(F: BivarField, G: BivarField, t: float, s: float, h: float):
    """Black-box product rule: graded Gauss rules in ``u`` and ``v``.

    Independent of the structured engines; resolves singularities on the
    edges of the rectangle but not along its interior diagonals.
    """
    u, wu = graded_rule(t, h)
    v, wv = graded_rule(s, h)
    U, V = np.meshgrid(u, v, indexing="ij")
    d = max(F.d, G.d)
    Fv = np.asarray(F(t - U, s - V))
    Gv = np.asarray(G(U, V))
    if d == 1:
        return np.array([[np.einsum("i,j,ij->", wu, wv, Fv * Gv)]])
    Fv = Fv if Fv.ndim == 4 else Fv[..., None, None] * np.eye(d)
    Gv = Gv if Gv.ndim == 4 else Gv[..., None, None] * np.eye(d)
    return np.einsum("i,j,ijab,ijbc->ac", wu, wv, Fv, Gv)


# ---------------------------------------------------------------------------
# identity checks


def _conv_operand(f, g, grid: Grid):
    """Operand for ``f*g``: closed form when available, else sampled on ``grid``."""
    try:
        return quad.KernelOperand(Convolution(f, g), grid.h)
    except (NonEvaluable, NoClosedForm):
        return quad.SampledOperand(conv1(f, g, grid))


def check_identity_le22(f: Kernel, g: Kernel, h: Kernel, j: Kernel, grid: Grid, tol: float = 1e-4) -> ResidualReport:
    """Three interactions of ``*`` and ``*2`` with tensor and sum lifts.

    (i)   ``(f (x) g) *2 (h (x) j) = (f*h) (x) (g*j)``
    (ii)  ``(g+ *2 (f (x) h))(t, s) = h*(f*g)_t (s) - f_t*(h*g)(s)``
    (iii) ``(f+ *2 g+)(t, s)`` piecewise via ``M(g) = s g(s)``

    Left sides of (i) and (iii) use the black-box graded rule, the left side
    of (ii) the structured sum-lift engine; right sides are one-variable
    convolutions.  Reports the max absolute residual of each part over all
    pairs of grid nodes.
    """
    hh = grid.h
    nodes = grid.nodes
    big = Grid(2 * grid.T, 2 * grid.n)
    fg = _conv_operand(f, g, big)
    hg = _conv_operand(h, g, big)
    fh = conv1(f, h, grid).node_values().reshape(grid.n, -1)[:, 0]
    gj = conv1(g, j, grid).node_values().reshape(grid.n, -1)[:, 0]
    r1, r2, r3, locs = [], [], [], []
    for a, t in enumerate(nodes):
        for b, s in enumerate(nodes):
            locs.append((t, s))
            lhs1 = conv2_tensor_rule(Tensor(f, g), Tensor(h, j), t, s, hh)[0, 0]
            r1.append(abs(lhs1 - fh[a] * gj[b]))
            # (ii)
            lhs2 = conv2(Plus(g), Tensor(f, h), t, s, hh)
            N, Mn = a + 1, b + 1
            fgt = quad.ShiftedOperand(fg, t)
            term1 = quad.conv_point(fgt, _operand(h, hh), Mn)[0, 0]
            ft = quad.ShiftedOperand(_operand(f, hh), t)
            term2 = quad.conv_point(ft, hg, Mn)[0, 0]
            r2.append(abs(lhs2 - (term1 - term2)))
            # (iii)
            lhs3 = conv2_tensor_rule(Plus(f), Plus(g), t, s, hh)[0, 0]
            r3.append(abs(lhs3 - _le22_iii_rhs(f, g, t, s, hh)))
    locs = np.array(locs)
    parts = {
        "i": ResidualReport("le22(i)", r1, tol, locations=locs),
        "ii": ResidualReport("le22(ii)", r2, tol, locations=locs),
        "iii": ResidualReport("le22(iii)", r3, tol, locations=locs),
    }
    return combine("le22", parts, tol, grid=grid.text())


def _le22_iii_rhs(f, g, t, s, h):
    """``(f_t * M(g))(s) + s (f_s * g_s)(t - s) + (M(f) * g_t)(s)`` for ``s <= t`` (swap otherwise)."""
    if s > t:
        t, s = s, t
    Fo, Go = _operand(f, h), _operand(g, h)
    Ms = int(round(s / h))
    part1 = quad.conv_point(quad.ShiftedOperand(Fo, t), quad.MOperand(Go), Ms)[0, 0]
    part3 = quad.conv_point(quad.MOperand(Fo), quad.ShiftedOperand(Go, t), Ms)[0, 0]
    D = int(round((t - s) / h))
    part2 = 0.0
    if D > 0:
        part2 = s * quad.conv_point(quad.ShiftedOperand(Fo, s), quad.ShiftedOperand(Go, s), D)[0, 0]
    return part1 + part2 + part3


def check_lemma_le51(f: Kernel, g: Kernel, h: Kernel, t: float, tau: float, grid_step: float | None = None,
                     tol: float = 1e-4) -> ResidualReport:
    """Residual of
    ``int_0^{t-tau} h(t-s)(g*f)(s) ds + int_0^tau f(t-s)(g*h)(s) ds
    = (f*g*h)(t) - (g+ *2 (f (x) h))(t - tau, tau)``.
    """
    if tau < 0 or tau > t:
        raise DomainError("need 0 <= tau <= t")
    hs = grid_step or t / (2 * DEFAULT_CELLS)
    n = int(round(t / hs))
    if abs(n * hs - t) > 1e-9 * t or abs(round(tau / hs) * hs - tau) > 1e-9 * max(t, 1):
        raise GridMismatch("t and tau must be grid nodes")
    grid = Grid(t, n)
    gf = conv1(g, f, grid)
    gh = conv1(g, h, grid)
    A = int(round((t - tau) / hs))
    B = int(round(tau / hs))
    # int_0^{t-tau} h(t-s)(g*f)(s) ds = int_0^{A h} X(u) Y(n h - u) with X = g*f, Y = h
    lhs = 0j
    if A > 0:
        lhs += quad.conv_point(quad.SampledOperand(gf), _operand(h, hs), n, x_cells=A)[0, 0]
    if B > 0:
        lhs += quad.conv_point(quad.SampledOperand(gh), _operand(f, hs), n, x_cells=B)[0, 0]
    fgh = conv1(conv1(f, g, grid), h, grid).node_values().reshape(n, -1)[-1, 0]
    rhs = fgh
    if A > 0 and B > 0:
        rhs -= conv2(Plus(g), Tensor(f, h), t - tau, tau, hs)
    return ResidualReport("le51", [abs(lhs - rhs)], tol, locations=np.array([[t, tau]]),
                          metadata={"lhs": lhs, "rhs": rhs})


def commutator_diagnostic(S) -> float:
    """``max_{i,j} ||S(t_i) S(t_j) - S(t_j) S(t_i)||`` on a family."""
    v = S.values
    prod = np.einsum("iab,jbc->ijac", v, v)
    return float(np.max(np.abs(prod - np.swapaxes(prod, 0, 1))))
