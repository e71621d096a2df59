"""Quadrature engines shared by the kernel, bivariate and extension code.

Every integrand factor is wrapped as an *operand*: something that can be
read at arbitrary points ``0 < r <= extent`` and that knows its singular
expansion on the first cell,

    f(r) = sum_k coef_k (r/h)**e_k + remainder(r),     0 < r <= h,

with a remainder that is smooth enough for plain Gauss-Legendre.  Cells away
from the origin use Gauss-Legendre; the first cell uses one Gauss-Jacobi
rule per singular power plus Gauss-Legendre on the remainder.

Two engines are built on this:

* :func:`conv_nodes` / :func:`conv_point`: the one-variable convolution on
  grid nodes (cell pairs summed with :func:`toeplitz_apply`);
* :func:`plus_rows`: ``I(M) = int_0^t int_0^s w(t+s-u-v) X(u) Y(v) dv du``
  for a fixed ``t = N h`` and all ``s = M h``.  Cell pairs away from the
  ``(t, s)`` corner are tabulated by the diagonal index ``D = N+M-a-b`` and
  contracted in two structured passes; the corner cell, where ``w`` may be
  singular, is integrated semi-analytically.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import binom, roots_jacobi, roots_legendre

from ._accel import hankel_contract, toeplitz_apply
from .errors import DomainError, NoClosedForm, NonEvaluable, NotIntegrable

GL_Q = 8  # Gauss-Legendre points per regular cell
GJ_Q = 12  # points per Gauss-Jacobi term on singular cells
CORNER_Q = 14
CORNER_DEG = 9


# ---------------------------------------------------------------------------
# Gauss rules on [0, 1]


@lru_cache(maxsize=None)
def gauss_legendre01(q: int):
    x, w = roots_legendre(q)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def _gauss_jacobi01_cached(q: int, e_key: float):
    e = float(e_key)
    # weight (1+y)**e on [-1, 1]; x = (y+1)/2 gives weight x**e with dx = dy/2
    y, w = roots_jacobi(q, 0.0, e)
    return (y + 1.0) / 2.0, w / 2.0 ** (e + 1.0)


def gauss_jacobi01(q: int, e: float):
    """Nodes and weights for ``int_0^1 x**e f(x) dx`` (``e > -1``)."""
    if e <= -1:
        raise NotIntegrable(f"weight x^{e} is not integrable at 0")
    if abs(e) < 1e-14:
        return gauss_legendre01(q)
    return _gauss_jacobi01_cached(q, round(float(e), 14))


def gauss_jacobi01_right(q: int, e: float):
    """Nodes and weights for ``int_0^1 (1-x)**e f(x) dx``."""
    x, w = gauss_jacobi01(q, e)
    return 1.0 - x, w


# ---------------------------------------------------------------------------
# operands


class Operand:
    """Read access plus first-cell singular expansion of an integrand factor."""

    h: float
    d: int
    extent: float

    def at(self, r) -> np.ndarray:  # (len, d, d)
        raise NotImplementedError

    def terms(self):
        """``[(coef (d, d), e)]`` with ``f(r) ~ sum coef (r/h)**e`` on the first cell."""
        return []

    def remainder(self, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = self.at(r)
        x = r / self.h
        for coef, e in self.terms():
            out = out - (x**e)[:, None, None] * coef[None]
        return out


class KernelOperand(Operand):
    def __init__(self, kernel, h, extent=np.inf):
        try:
            kernel.terms()
        except NoClosedForm:
            raise NonEvaluable(f"{kernel.text()} has no pointwise form; sample it first") from None
        self.kernel = kernel
        self.h = float(h)
        self.d = 1
        self.extent = extent
        self._terms = [(np.array([[complex(c) * self.h**e]]), float(e)) for c, e in kernel.power_terms()]

    def at(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r <= 0):
            raise DomainError("kernel read at r <= 0")
        return np.asarray(self.kernel(r), dtype=complex).reshape(-1, 1, 1)

    def terms(self):
        return self._terms


class SampledOperand(Operand):
    def __init__(self, sv):
        self.sv = sv
        self.h = sv.h
        self.d = sv.d
        self.extent = sv.T * (1 + 1e-12)
        if sv.v0 is None:
            self._terms = [(sv.coef[k], float(sv.exponents[k])) for k in range(sv.zone)]
        else:
            self._terms = []

    def at(self, r):
        return self.sv.at(r)

    def terms(self):
        return self._terms

    def remainder(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.sv.v0 is None and np.all(r <= self.sv.zone * self.h):
            return np.zeros((r.size, self.d, self.d), dtype=complex)
        return Operand.remainder(self, r)


class ShiftedOperand(Operand):
    """``r -> f(r + shift)`` with ``shift >= h``: regular on every cell."""

    def __init__(self, op: Operand, shift: float):
        self.op = op
        self.shift = float(shift)
        self.h = op.h
        self.d = op.d
        self.extent = op.extent - self.shift

    def at(self, r):
        return self.op.at(np.asarray(r, dtype=float) + self.shift)


class MOperand(Operand):
    """``r -> r f(r)``."""

    def __init__(self, op: Operand):
        self.op = op
        self.h = op.h
        self.d = op.d
        self.extent = op.extent

    def at(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return r[:, None, None] * self.op.at(r)

    def terms(self):
        return [(coef * self.h, e + 1.0) for coef, e in self.op.terms()]


class ScaledOperand(Operand):
    """``r -> c f(r)`` with a scalar or matrix constant multiplying on the left."""

    def __init__(self, op: Operand, c):
        self.op = op
        self.c = np.asarray(c, dtype=complex)
        self.h = op.h
        self.d = max(op.d, self.c.shape[0] if self.c.ndim == 2 else 1)
        self.extent = op.extent

    def _apply(self, v):
        if self.c.ndim == 2:
            if v.shape[-1] == 1:
                return v * self.c[None]
            return np.einsum("ab,rbc->rac", self.c, v)
        return v * self.c

    def at(self, r):
        return self._apply(self.op.at(r))

    def terms(self):
        return [(self._apply(coef[None])[0], e) for coef, e in self.op.terms()]


class EntryOperand(Operand):
    """One matrix entry of a matrix-valued operand, as a scalar operand."""

    def __init__(self, op: Operand, i: int, k: int):
        self.op, self.i, self.k = op, i, k
        self.h, self.d, self.extent = op.h, 1, op.extent

    def at(self, r):
        return self.op.at(r)[:, self.i : self.i + 1, self.k : self.k + 1]

    def terms(self):
        return [(coef[self.i : self.i + 1, self.k : self.k + 1], e) for coef, e in self.op.terms()]


class CallableOperand(Operand):
    """Regular operand from a vectorized callable ``r -> (len, d, d)``."""

    def __init__(self, func, h, d, extent=np.inf):
        self.func, self.h, self.d, self.extent = func, float(h), d, extent

    def at(self, r):
        return np.asarray(self.func(np.atleast_1d(np.asarray(r, dtype=float))), dtype=complex).reshape(-1, self.d, self.d)


def as_operand(x, h) -> Operand:
    """Wrap a kernel, sampled values, family or operand."""
    from .kernels import Kernel, SampledValues, Tabulated

    if isinstance(x, Operand):
        return x
    if isinstance(x, Tabulated):
        return SampledOperand(x.sampled())
    if isinstance(x, Kernel):
        return KernelOperand(x, h)
    if isinstance(x, SampledValues):
        return SampledOperand(x)
    if hasattr(x, "sampled"):
        return SampledOperand(x.sampled)
    raise TypeError(f"cannot integrate {type(x).__name__}")


def _dims(*ops):
    ds = {op.d for op in ops}
    ds.discard(1)
    if len(ds) > 1:
        raise DomainError("matrix sizes of the factors differ")
    return ds.pop() if ds else 1


def _broadcast(v, d):
    if v.shape[-1] == d:
        return v
    return v * np.eye(d)


def cell0_rule(op: Operand, q: int = GJ_Q):
    """Rule for ``int_0^h phi(r) f(r) dr ~ h sum_p wt_p val_p phi(xi_p h)``."""
    xs, ws, vs = [], [], []
    terms = op.terms()
    for coef, e in terms:
        x, w = gauss_jacobi01(q, e)
        xs.append(x)
        ws.append(w)
        vs.append(np.broadcast_to(coef, (q,) + coef.shape))
    x, w = gauss_legendre01(q)
    xs.append(x)
    ws.append(w)
    vs.append(op.remainder(x * op.h) if terms else op.at(x * op.h))
    return np.concatenate(xs), np.concatenate(ws), np.concatenate(vs)


# ---------------------------------------------------------------------------
# one-variable convolution


def _first_cell_pair(X: Operand, Y: Operand, d: int, q: int = GJ_Q):
    """``int_0^h X(u) Y(h-u) du`` with both ends possibly singular."""
    h = X.h
    tx, ty = X.terms(), Y.terms()
    total = np.zeros((d, d), dtype=complex)
    for cx, ex in tx:
        for cy, ey in ty:
            total += beta_fn(ex + 1.0, ey + 1.0) * (_broadcast(cx[None], d)[0] @ _broadcast(cy[None], d)[0])
    xg, wg = gauss_legendre01(q)
    rx = _broadcast(X.remainder(xg * h) if tx else X.at(xg * h), d)
    ry_at = lambda x: _broadcast(Y.remainder((1.0 - x) * h) if ty else Y.at((1.0 - x) * h), d)
    for cx, ex in tx:
        x, w = gauss_jacobi01(q, ex)
        total += np.einsum("p,ab,pbc->ac", w, _broadcast(cx[None], d)[0], ry_at(x))
    for cy, ey in ty:
        x, w = gauss_jacobi01_right(q, ey)
        rxx = _broadcast(X.remainder(x * h) if tx else X.at(x * h), d)
        total += np.einsum("p,pab,bc->ac", w, rxx, _broadcast(cy[None], d)[0])
    total += np.einsum("p,pab,pbc->ac", wg, rx, ry_at(xg))
    return h * total


def conv_nodes(X, Y, n_out: int, x_cells: int | None = None, q: int = GL_Q) -> np.ndarray:
    """``int_0^{min(j h, L)} X(u) Y(j h - u) du`` for ``j = 1..n_out``.

    ``L = x_cells * h`` restricts the ``X`` variable (partial convolution);
    by default the whole range is used.  Returns an array (n_out, d, d).
    """
    h = X.h
    d = _dims(X, Y)
    A = n_out if x_cells is None else min(int(x_cells), n_out)
    out = np.zeros((n_out, d, d), dtype=complex)
    if A <= 0 or n_out <= 0:
        return out
    xi, w = gauss_legendre01(q)
    # regular x regular cells: a in 1..A-1, b = j-1-a in 1..
    if A >= 2 and n_out >= 3:
        a_idx = np.arange(1, A)
        xv = _broadcast(X.at(((a_idx[:, None] + xi[None, :]) * h).ravel()), d).reshape(A - 1, q, d, d)
        xw = np.zeros((A, q, d, d), dtype=complex)
        xw[1:] = h * w[None, :, None, None] * xv
        b_idx = np.arange(1, n_out)
        yv = _broadcast(Y.at(((b_idx[:, None] + 1.0 - xi[None, :]) * h).ravel()), d).reshape(n_out - 1, q, d, d)
        yg = np.zeros((n_out, q, d, d), dtype=complex)
        yg[1:] = yv
        # toeplitz_apply multiplies g on the left; transpose to keep X @ Y
        res = toeplitz_apply(np.swapaxes(yg, -1, -2), np.swapaxes(xw, -1, -2), 1, n_out)
        out += np.swapaxes(res, -1, -2)
    xi0, wt0, val0 = cell0_rule(X)
    yi0, ywt0, yval0 = cell0_rule(Y)
    val0 = _broadcast(val0, d)
    yval0 = _broadcast(yval0, d)
    if n_out >= 2:
        j = np.arange(2, n_out + 1)
        # X on its first cell, Y regular
        yy = _broadcast(Y.at(((j[:, None] - xi0[None, :]) * h).ravel()), d).reshape(j.size, xi0.size, d, d)
        out[1:] += h * np.einsum("p,pab,jpbc->jac", wt0, val0, yy)
        # Y on its first cell, X regular (a = j-1 < A)
        jb = np.arange(2, min(n_out, A) + 1)
        if jb.size:
            xx = _broadcast(X.at(((jb[:, None] - yi0[None, :]) * h).ravel()), d).reshape(jb.size, yi0.size, d, d)
            out[jb - 1] += h * np.einsum("jpab,p,pbc->jac", xx, ywt0, yval0)
    out[0] += _first_cell_pair(X, Y, d)
    return out


def conv_point(X, Y, j: int, x_cells: int | None = None, q: int = GL_Q) -> np.ndarray:
    """``int_0^{min(j h, L)} X(u) Y(j h - u) du`` at a single node ``j``."""
    h = X.h
    d = _dims(X, Y)
    A = j if x_cells is None else min(int(x_cells), j)
    out = np.zeros((d, d), dtype=complex)
    if A <= 0:
        return out
    if j == 1:
        return _first_cell_pair(X, Y, d)
    xi, w = gauss_legendre01(q)
    a_idx = np.arange(1, min(A, j - 1))
    if a_idx.size:
        xv = _broadcast(X.at(((a_idx[:, None] + xi[None, :]) * h).ravel()), d).reshape(a_idx.size, q, d, d)
        yv = _broadcast(Y.at(((j - a_idx[:, None] - xi[None, :]) * h).ravel()), d).reshape(a_idx.size, q, d, d)
        out += h * np.einsum("q,aqbc,aqcd->bd", w, xv, yv)
    xi0, wt0, val0 = cell0_rule(X)
    yy = _broadcast(Y.at((j - xi0) * h), d)
    out += h * np.einsum("p,pab,pbc->ac", wt0, _broadcast(val0, d), yy)
    if A >= j:
        yi0, ywt0, yval0 = cell0_rule(Y)
        xx = _broadcast(X.at((j - yi0) * h), d)
        out += h * np.einsum("pab,p,pbc->ac", xx, ywt0, _broadcast(yval0, d))
    return out


# ---------------------------------------------------------------------------
# rules on the unit interval for the corner cell


def _unit_rule_reversed(op: Operand, m: int, q: int = CORNER_Q):
    """Rule for ``int_0^1 phi(y) op(s - h y) dy`` with ``s = m h``."""
    h = op.h
    if m >= 2:
        y, w = gauss_legendre01(q)
        return y, w, op.at((m - y) * h)
    ys, ws, vs = [], [], []
    terms = op.terms()
    for coef, e in terms:
        y, w = gauss_jacobi01_right(q, e)
        ys.append(y)
        ws.append(w)
        vs.append(np.broadcast_to(coef, (q,) + coef.shape))
    y, w = gauss_legendre01(q)
    ys.append(y)
    ws.append(w)
    vs.append(op.remainder((1.0 - y) * h) if terms else op.at((1.0 - y) * h))
    return np.concatenate(ys), np.concatenate(ws), np.concatenate(vs)


def _half_rule_reversed(op: Operand, m: int, lo: float, q: int = CORNER_Q):
    """Rule for ``int_lo^1 phi(x) op(t - h x) dx`` with ``t = m h``."""
    h = op.h
    span = 1.0 - lo
    if m >= 2:
        z, w = gauss_legendre01(q)
        x = lo + span * z
        return x, span * w, op.at((m - x) * h)
    xs, ws, vs = [], [], []
    terms = op.terms()
    for coef, e in terms:
        z, w = gauss_jacobi01_right(q, e)
        xs.append(lo + span * z)
        ws.append(span * w * span**e)
        vs.append(np.broadcast_to(coef, (q,) + coef.shape))
    z, w = gauss_legendre01(q)
    x = lo + span * z
    xs.append(x)
    ws.append(span * w)
    vs.append(op.remainder((1.0 - x) * h) if terms else op.at((1.0 - x) * h))
    return np.concatenate(xs), np.concatenate(ws), np.concatenate(vs)


def _moment_reversed(op: Operand, m: int, p: float, q: int = CORNER_Q):
    """``int_0^1 y**p op(s - h y) dy`` with ``s = m h`` (``p > -1``)."""
    h = op.h
    y, w = gauss_jacobi01(q, p)
    if m >= 2:
        return np.einsum("p,pab->ab", w, op.at((m - y) * h))
    terms = op.terms()
    total = np.zeros((op.d, op.d), dtype=complex)
    for coef, e in terms:
        total = total + beta_fn(p + 1.0, e + 1.0) * coef
    rem = op.remainder((1.0 - y) * h) if terms else op.at((1.0 - y) * h)
    return total + np.einsum("p,pab->ab", w, rem)


def _check_weight_exponents(w: Operand):
    for _, qexp in w.terms():
        if qexp <= -2:
            raise NotIntegrable(f"weight exponent {qexp} <= -2: divergent moment in two variables")
        if abs(qexp + 1.0) < 1e-12:
            raise NoClosedForm("weight exponent -1 needs logarithmic corner moments")


def corner_cell(w: Operand, X: Operand, Y: Operand, N: int, M: int, d: int) -> np.ndarray:
    """``int int w(t+s-u-v) X(u) Y(v)`` over the cell touching ``(t, s)``.

    In local coordinates ``u = t - h x``, ``v = s - h y`` this is
    ``h^2 int_0^1 int_0^1 w(h(x+y)) X(t-hx) Y(s-hy)``.  For ``x < L`` the
    factor ``X`` is replaced by a polynomial and the singular powers of ``w``
    are integrated exactly in ``x``; the rest uses product Gauss rules.
    """
    h = w.h
    L = 0.25 if N == 1 else 0.5
    yr, wr, vr = _unit_rule_reversed(Y, M)
    vr = _broadcast(vr, d)
    # region x in [L, 1]
    xb, wb, vb = _half_rule_reversed(X, N, L)
    vb = _broadcast(vb, d)
    W = w.at((h * (xb[:, None] + yr[None, :])).ravel()).reshape(xb.size, yr.size)
    total = np.einsum("i,j,ij,iab,jbc->ac", wb, wr, W, vb, vr)
    # region x in [0, L]: polynomial model of X(t - h x)
    deg = CORNER_DEG
    k = np.arange(deg + 1)
    z = 0.5 * (1.0 - np.cos((2 * k + 1) * np.pi / (2 * (deg + 1))))
    xc = L * z
    fx = _broadcast(X.at((N - xc) * h), d)
    vand = z[:, None] ** k[None, :]
    ptilde = np.linalg.solve(vand, fx.reshape(deg + 1, -1)).reshape(deg + 1, d, d)
    p = ptilde / (L ** k)[:, None, None]
    for coef, qexp in w.terms():
        cw = complex(coef[0, 0])
        for j in range(deg + 1):
            i = np.arange(j + 1)
            cji = binom(j, i)
            denom = qexp + i + 1.0
            smooth = np.zeros(yr.size)
            for ii in range(j + 1):
                smooth = smooth + cji[ii] * (-yr) ** (j - ii) * (L + yr) ** denom[ii] / denom[ii]
            sing = -np.sum(cji * (-1.0) ** (j - i) / denom)
            part = np.einsum("j,jab->ab", wr * smooth, vr)
            part = part + sing * _broadcast(_moment_reversed(Y, M, qexp + j + 1.0)[None], d)[0]
            total = total + cw * (p[j] @ part)
    # smooth remainder of w on x in [0, L]
    xg, wg = gauss_legendre01(CORNER_Q)
    xa = L * xg
    rem = w.remainder((h * (xa[:, None] + yr[None, :])).ravel())[:, 0, 0].reshape(xa.size, yr.size)
    if np.any(rem != 0):
        va = _broadcast(X.at((N - xa) * h), d)
        total = total + np.einsum("i,j,ij,iab,jbc->ac", L * wg, wr, rem, va, vr)
    return h * h * total


# ---------------------------------------------------------------------------
# Plus-row engine


def plus_rows(w, X, Y, N: int, M_max: int, q: int = GL_Q) -> np.ndarray:
    """``I(M) = int_0^{N h} int_0^{M h} w(t+s-u-v) X(u) Y(v) dv du``, ``M = 1..M_max``.

    ``w`` must be scalar; ``X`` and ``Y`` may be matrices (products are
    taken as ``X @ Y``).  Returns an array (M_max, d, d).
    """
    if w.d != 1:
        if X.d != 1 or Y.d != 1:
            raise DomainError("matrix weights need scalar factors")
        out = np.zeros((M_max, w.d, w.d), dtype=complex)
        for i in range(w.d):
            for k in range(w.d):
                out[:, i, k] = plus_rows(EntryOperand(w, i, k), X, Y, N, M_max, q)[:, 0, 0]
        return out
    _check_weight_exponents(w)
    h = w.h
    d = _dims(X, Y)
    e = d * d
    xi, gw = gauss_legendre01(q)
    out = np.zeros((M_max, d, d), dtype=complex)
    n_d = N + M_max + 1
    D = np.arange(n_d, dtype=float)

    def table(px, py):
        r = D[:, None, None] - px[None, :, None] - py[None, None, :]
        vals = np.zeros(r.shape, dtype=complex)
        ok = D >= 3
        vals[ok] = w.at((h * r[ok]).ravel())[:, 0, 0].reshape((int(ok.sum()),) + r.shape[1:])
        return vals

    # X weights: regular cells 1..N-1 and the first-cell rule
    xw = np.zeros((N, q, d, d), dtype=complex)
    if N >= 2:
        a_idx = np.arange(1, N)
        xv = _broadcast(X.at(((a_idx[:, None] + xi[None, :]) * h).ravel()), d).reshape(N - 1, q, d, d)
        xw[1:] = h * gw[None, :, None, None] * xv
    xi0, wt0, val0 = cell0_rule(X)
    x0w = (h * wt0[:, None, None] * _broadcast(val0, d))[None]
    yw = np.zeros((M_max, q, d, d), dtype=complex)
    if M_max >= 2:
        b_idx = np.arange(1, M_max)
        yv = _broadcast(Y.at(((b_idx[:, None] + xi[None, :]) * h).ravel()), d).reshape(M_max - 1, q, d, d)
        yw[1:] = h * gw[None, :, None, None] * yv
    yi0, ywt0, yval0 = cell0_rule(Y)
    y0w = h * ywt0[:, None, None] * _broadcast(yval0, d)

    # regular X cells (a >= 1; row 0 of xw is zero)
    if N >= 2:
        xflat = xw.reshape(N, q, e)
        if M_max >= 2:
            G = hankel_contract(table(xi, xi), xflat, N, M_max).reshape(M_max, q, d, d)
            out += toeplitz_apply(G, yw, 1, M_max)
        G = hankel_contract(table(xi, yi0), xflat, N, M_max).reshape(M_max, yi0.size, d, d)
        out += np.einsum("mpab,pbc->mac", G, y0w)
    # X on its first cell (a = 0)
    x0flat = x0w.reshape(1, xi0.size, e)
    if M_max >= 2:
        G0 = hankel_contract(table(xi0, xi), x0flat, N, M_max).reshape(M_max, q, d, d)
        out += toeplitz_apply(G0, yw, 1, M_max)
    G00 = hankel_contract(table(xi0, yi0), x0flat, N, M_max).reshape(M_max, yi0.size, d, d)
    out += np.einsum("mpab,pbc->mac", G00, y0w)
    # corner cells
    for M in range(1, M_max + 1):
        out[M - 1] += corner_cell(w, X, Y, N, M, d)
    return out


def plus_point_naive(w, X, Y, N: int, M: int, q: int = GL_Q) -> np.ndarray:
    """Same rule as :func:`plus_rows`, summed directly cell pair by cell pair."""
    _check_weight_exponents(w)
    h = w.h
    d = _dims(X, Y)
    xi, gw = gauss_legendre01(q)
    xi0, wt0, val0 = cell0_rule(X)
    yi0, ywt0, yval0 = cell0_rule(Y)

    def x_rule(a):
        if a == 0:
            return xi0, h * wt0, _broadcast(val0, d)
        return a + xi, h * gw, _broadcast(X.at((a + xi) * h), d)

    def y_rule(b):
        if b == 0:
            return yi0, h * ywt0, _broadcast(yval0, d)
        return b + xi, h * gw, _broadcast(Y.at((b + xi) * h), d)

    total = np.zeros((d, d), dtype=complex)
    for a in range(N):
        pu, wu, vu = x_rule(a)
        for b in range(M):
            if a == N - 1 and b == M - 1:
                continue
            pv, wv, vv = y_rule(b)
            W = w.at((h * (N + M - pu[:, None] - pv[None, :])).ravel())[:, 0, 0].reshape(pu.size, pv.size)
            total += np.einsum("i,j,ij,iab,jbc->ac", wu, wv, W, vu, vv)
    return total + corner_cell(w, X, Y, N, M, d)


# ---------------------------------------------------------------------------
# Minus engine (difference variable)


class _MinusInner(Operand):
    """``Phi(y) = int_0^{N h} w(|x - y|) X(N h - x) dx`` as a regular operand in ``y``.

    The ``x`` integral is split at ``x = y``; on both sides the cell that
    touches the diagonal uses the singular rule of ``w``, the other cells
    Gauss-Legendre.
    """

    def __init__(self, w: Operand, X: Operand, N: int, q: int = GL_Q):
        self.w, self.X, self.N, self.q = w, X, N, q
        self.h, self.d = w.h, X.d
        self.extent = N * w.h
        self._wi, self._ww, self._wv = cell0_rule(w)
        self._xi, self._gw = gauss_legendre01(q)

    def at(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        h, N = self.h, self.N
        T = N * h
        out = np.zeros((r.size, self.d, self.d), dtype=complex)
        for i, y in enumerate(r):
            out[i] = self._one(y, y, +1) + self._one(y, T - y, -1)
        return out

    def _one(self, y, length, sign):
        # int_0^length w(z) X(N h - y + sign z) dz
        h = self.h
        T = self.N * h
        if length <= 0:
            return np.zeros((self.d, self.d), dtype=complex)
        first = min(h, length)
        s = first / h
        # singular rule on [0, first]: scale the first-cell rule when first < h
        if s >= 1.0 - 1e-14:
            z0 = self._wi * h
            wt = h * self._ww * _broadcast_w(self._wv)
        else:
            xi, gw = gauss_legendre01(2 * self.q)
            z0 = xi * first
            wt = first * gw * self.w.at(z0)[:, 0, 0]
        arg = T - y + sign * z0
        total = np.einsum("p,pab->ab", wt, _broadcast(self._x_at(arg), self.d))
        if length > first:
            ncell = int(np.ceil((length - first) / h - 1e-12))
            edges = first + h * np.arange(ncell + 1)
            edges[-1] = length
            lo, hi = edges[:-1], edges[1:]
            z = (lo[:, None] + (hi - lo)[:, None] * self._xi[None, :]).ravel()
            wz = ((hi - lo)[:, None] * self._gw[None, :]).ravel() * self.w.at(z)[:, 0, 0]
            total = total + np.einsum("p,pab->ab", wz, _broadcast(self._x_at(T - y + sign * z), self.d))
        return total

    def _x_at(self, u):
        u = np.clip(u, 1e-300, None)
        return self.X.at(u)


def _broadcast_w(v):
    return v[:, 0, 0]


def minus_rows(w, X, Y, N: int, M_max: int) -> np.ndarray:
    """``I(M) = int_0^{N h} int_0^{M h} w(|N h - u - (M h - v)|) X(u) Y(v) dv du``.

    Uses ``y = M h - v``: ``I(M) = int_0^{M h} Phi(y) Y(M h - y) dy`` with the
    inner function of :class:`_MinusInner`, so one ``Phi`` serves every ``M``.
    Requires ``M_max <= N``.
    """
    if w.d != 1:
        raise DomainError("minus engine needs a scalar weight")
    if M_max > N:
        raise DomainError("minus engine needs M <= N")
    for _, qexp in w.terms():
        if qexp <= -1:
            raise NotIntegrable(f"weight exponent {qexp} <= -1 on the diagonal")
    phi = _MinusInner(w, X, N)
    return conv_nodes(phi, Y, M_max)
