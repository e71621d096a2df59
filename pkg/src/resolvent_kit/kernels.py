"""Scalar kernels: descriptors, evaluation, convolution and pair solving.

A kernel is an immutable descriptor (``PowerLaw(0.5)``, ``Exponential(1)``,
``Convolution(f, g)``, ...).  Whenever possible a descriptor reduces to a
finite sum of closed-form *terms*; the terms carry evaluation, Laplace
transforms, the small-``t`` expansion used by the singular quadrature, and
the convolution algebra (``g_a * g_b = g_{a+b}``, ``e_l * e_m`` by partial
fractions, ...).  Kernels without closed form are convolved numerically by
:func:`conv1`.

Notation: ``g_a(t) = t**(a-1) / Gamma(a)`` and ``e_l(t) = exp(-l t)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import binom, gamma as gamma_fn, gammaln, gammasgn, rgamma

from .errors import (
    DomainError,
    GridMismatch,
    NoClosedForm,
    NonEvaluable,
    NotIntegrable,
    OutOfRange,
)

# number of Taylor orders kept when splitting a kernel into singular powers plus a smooth rest
_EXPANSION_ORDER = 6
_TOL_PARAM = 1e-12


def _is_nonpositive_int(x: float) -> bool:
    return abs(x - round(x)) < _TOL_PARAM and round(x) <= 0


def _is_int(x: float) -> bool:
    return abs(x - round(x)) < _TOL_PARAM


def _fmt_num(x) -> str:
    x = complex(x)
    if x.imag == 0:
        return repr(float(x.real)).rstrip("0").rstrip(".") if "e" not in repr(float(x.real)) else repr(float(x.real))
    re_part = "" if x.real == 0 else _fmt_num(x.real)
    im = x.imag
    sign = "+" if im >= 0 and re_part else ("-" if im < 0 and re_part else ("-" if im < 0 else ""))
    return f"{re_part}{sign}{_fmt_num(abs(im))}i"


def power_value(p: float, t):
    """``t**(p-1) / Gamma(p)`` via log-Gamma (``p`` not a pole)."""
    t = np.asarray(t, dtype=float)
    if _is_nonpositive_int(p):
        raise OutOfRange(f"g_{p} is undefined (alpha in {{0,-1,-2,...}})")
    with np.errstate(divide="ignore", over="ignore"):
        return gammasgn(p) * np.exp((p - 1.0) * np.log(t) - gammaln(p))


# ---------------------------------------------------------------------------
# closed-form terms


@dataclass(frozen=True)
class _Term:
    """One closed-form summand.

    kind ``pow``: ``c g_p(t)``;  ``exp``: ``c g_m(t) exp(-lam t)``;
    ``powexp``: ``c (g_p * e_lam)(t)``;  ``levy``: one-sided stable density
    with Laplace transform ``c exp(-sigma sqrt(s))``.
    """

    kind: str
    c: complex
    p: float = 1.0
    lam: complex = 0.0
    sigma: float = 0.0

    def key(self):
        lam = complex(self.lam)
        return (self.kind, round(self.p, 12), round(lam.real, 12), round(lam.imag, 12), round(self.sigma, 12))

    # evaluation ---------------------------------------------------------
    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "pow":
            return self.c * power_value(self.p, t)
        if self.kind == "exp":
            return self.c * power_value(self.p, t) * np.exp(-self.lam * t)
        if self.kind == "powexp":
            from .special import ml

            z = -self.lam * t
            return self.c * t**self.p * np.asarray(ml(1.0, self.p + 1.0, z))
        if self.kind == "levy":
            s = self.sigma
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                val = s / (2.0 * math.sqrt(math.pi)) * t**-1.5 * np.exp(-(s * s) / (4.0 * t))
            return self.c * np.where(t > 0, val, 0.0)
        raise AssertionError(self.kind)

    def laplace(self, s):
        s = np.asarray(s, dtype=complex)
        if self.kind == "pow":
            return self.c * s ** (-self.p)
        if self.kind == "exp":
            return self.c * (s + self.lam) ** (-self.p)
        if self.kind == "powexp":
            return self.c * s ** (-self.p) / (s + self.lam)
        return self.c * np.exp(-self.sigma * np.sqrt(s))

    @property
    def exponent(self) -> float:
        if self.kind in ("pow", "exp"):
            return self.p - 1.0
        if self.kind == "powexp":
            return self.p
        return math.inf

    @property
    def abscissa(self) -> float:
        if self.kind == "exp":
            return -complex(self.lam).real
        if self.kind == "powexp":
            return max(0.0, -complex(self.lam).real)
        return 0.0

    def expansion(self, order=_EXPANSION_ORDER):
        """Non-smooth powers ``[(coef, e)]`` with ``term(t) - sum coef t**e`` smooth near 0."""
        if self.kind == "pow":
            if _is_int(self.p) and self.p >= 1:
                return []
            return [(self.c * rgamma(self.p), self.p - 1.0)]
        if self.kind == "exp":
            if _is_int(self.p) and self.p >= 1:
                return []
            out = []
            for j in range(order + 1):
                out.append((self.c * (-self.lam) ** j / math.factorial(j) * rgamma(self.p), self.p - 1.0 + j))
            return out
        if self.kind == "powexp":
            if _is_int(self.p) and self.p >= 0:
                return []
            return [(self.c * (-self.lam) ** j * rgamma(self.p + j + 1.0), self.p + j) for j in range(order + 1)]
        return []

    def value_at_zero(self) -> complex:
        if self.kind in ("pow", "exp"):
            if self.p > 1 + _TOL_PARAM:
                return 0.0
            if abs(self.p - 1) < _TOL_PARAM:
                return self.c
            return complex(math.inf)
        return 0.0

    def derivative(self):
        if self.kind == "pow":
            if abs(self.p - 1) < _TOL_PARAM:
                return []
            return [_Term("pow", self.c, self.p - 1.0)]
        if self.kind == "exp":
            if abs(self.p - 1) < _TOL_PARAM:
                return [_Term("exp", -self.lam * self.c, 1.0, self.lam)]
            return [_Term("exp", self.c, self.p - 1.0, self.lam), _Term("exp", -self.lam * self.c, self.p, self.lam)]
        if self.kind == "powexp" and self.p > 1 + _TOL_PARAM:
            return [_Term("powexp", self.c, self.p - 1.0, self.lam)]
        return None

    def scaled(self, k):
        return _Term(self.kind, self.c * k, self.p, self.lam, self.sigma)


def _normalize(term: _Term) -> _Term:
    if term.kind == "exp" and complex(term.lam) == 0:
        return _Term("pow", term.c, term.p)
    if term.kind == "powexp" and complex(term.lam) == 0:
        return _Term("pow", term.c, term.p + 1.0)
    return term


def _combine(terms) -> tuple:
    acc: dict = {}
    order = []
    for t in terms:
        t = _normalize(t)
        k = t.key()
        if k in acc:
            acc[k] = _Term(t.kind, acc[k].c + t.c, t.p, t.lam, t.sigma)
        else:
            acc[k] = t
            order.append(k)
    return tuple(acc[k] for k in order if acc[k].c != 0)


def _conv_terms(a: _Term, b: _Term):
    """Closed-form convolution of two terms, or ``None``."""
    a, b = _normalize(a), _normalize(b)
    if a.kind == "pow" and b.kind != "pow":
        a, b = b, a
    c = a.c * b.c
    if b.kind == "pow":
        p = b.p
        if a.kind == "pow":
            return [_Term("pow", c, a.p + p)]
        if a.kind == "exp" and abs(a.p - 1) < _TOL_PARAM:
            return [_Term("powexp", c, p, a.lam)]
        if a.kind == "powexp":
            return [_Term("powexp", c, a.p + p, a.lam)]
        return None
    if a.kind == "levy" and b.kind == "levy":
        return [_Term("levy", c, 1.0, 0.0, a.sigma + b.sigma)]
    if a.kind == "exp" and b.kind == "exp":
        if a.key()[2:4] == b.key()[2:4]:
            return [_Term("exp", c, a.p + b.p, a.lam)]
        if abs(a.p - 1) < _TOL_PARAM and abs(b.p - 1) < _TOL_PARAM:
            d = b.lam - a.lam
            return [_Term("exp", c / d, 1.0, a.lam), _Term("exp", -c / d, 1.0, b.lam)]
        return None
    # remaining: combinations with powexp (g_p * e_lam) and plain exponentials
    pa = a.p if a.kind == "powexp" else 0.0
    pb = b.p if b.kind == "powexp" else 0.0
    if {a.kind, b.kind} <= {"exp", "powexp"}:
        if (a.kind == "exp" and abs(a.p - 1) > _TOL_PARAM) or (b.kind == "exp" and abs(b.p - 1) > _TOL_PARAM):
            return None
        if complex(a.lam) == complex(b.lam):
            return None
        d = b.lam - a.lam
        p = pa + pb
        return [_Term("powexp", c / d, p, a.lam), _Term("powexp", -c / d, p, b.lam)]
    return None


def _conv_term_lists(x, y):
    out = []
    for a in x:
        for b in y:
            r = _conv_terms(a, b)
            if r is None:
                raise NoClosedForm(f"no closed form for {a.kind} * {b.kind}")
            out.extend(r)
    return _combine(out)


# ---------------------------------------------------------------------------
# kernel descriptors


class Kernel:
    """Base class of the kernel descriptors."""

    # -- closed form hooks -------------------------------------------------
    def terms(self) -> tuple:
        raise NoClosedForm(f"{self.text()} has no closed form")

    @property
    def has_closed_form(self) -> bool:
        try:
            self.terms()
        except NoClosedForm:
            return False
        return True

    # -- evaluation --------------------------------------------------------
    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr <= 0):
            raise DomainError("kernels are evaluated at t > 0 only")
        try:
            terms = self.terms()
        except NoClosedForm as exc:
            raise NonEvaluable(str(exc)) from None
        out = np.zeros(t_arr.shape, dtype=complex)
        for term in terms:
            out = out + term(t_arr)
        return out if out.ndim else complex(out)

    @property
    def singularity_exponent(self) -> float:
        terms = self.terms()
        if not terms:
            return math.inf
        return min(t.exponent for t in terms)

    @property
    def abscissa(self) -> float:
        terms = self.terms()
        return max([t.abscissa for t in terms], default=0.0)

    def laplace(self, lam):
        terms = self.terms()
        out = 0j
        for term in terms:
            out = out + term.laplace(lam)
        return out

    def power_terms(self):
        """Singular small-``t`` powers ``[(coef, exponent)]``; the rest is smooth."""
        out = []
        for term in self.terms():
            out.extend(term.expansion())
        merged: dict = {}
        for c, e in out:
            k = round(e, 12)
            merged[k] = merged.get(k, 0) + c
        return [(c, e) for e, c in sorted(merged.items()) if c != 0]

    def derivative(self) -> "Kernel":
        out = []
        for term in self.terms():
            d = term.derivative()
            if d is None:
                raise NoClosedForm(f"no closed-form derivative for {self.text()}")
            out.extend(d)
        return _from_terms(_combine(out))

    def value_at_zero(self) -> complex:
        total = 0j
        for term in self.terms():
            v = term.value_at_zero()
            if np.isinf(v):
                return complex(math.inf)
            total += v
        return total

    # -- structure -----------------------------------------------------------
    def text(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.text()

    def key(self):
        """Structural key: canonical term multiset, else the canonical text."""
        try:
            return tuple(sorted((t.key() + (round(complex(t.c).real, 12), round(complex(t.c).imag, 12))) for t in self.terms()))
        except NoClosedForm:
            return ("text", self.text())

    def canonical(self) -> "Kernel":
        try:
            return _from_terms(self.terms())
        except NoClosedForm:
            return self

    def same_as(self, other: "Kernel") -> bool:
        return self.key() == other.key()


@dataclass(frozen=True)
class PowerLaw(Kernel):
    """``g_alpha(t) = t**(alpha-1) / Gamma(alpha)``."""

    alpha: float

    def __post_init__(self):
        if _is_nonpositive_int(self.alpha):
            raise OutOfRange(f"PowerLaw({self.alpha}): alpha must avoid 0,-1,-2,...")

    def terms(self):
        return (_Term("pow", 1.0, float(self.alpha)),)

    def text(self):
        return f"g({_fmt_num(self.alpha)})"


@dataclass(frozen=True)
class Constant(Kernel):
    c: complex = 1.0

    def terms(self):
        return (_Term("pow", complex(self.c), 1.0),) if self.c != 0 else ()

    def text(self):
        return f"const({_fmt_num(self.c)})"


@dataclass(frozen=True)
class Exponential(Kernel):
    """``e_lam(t) = exp(-lam t)``."""

    lam: complex

    def terms(self):
        return (_normalize(_Term("exp", 1.0, 1.0, complex(self.lam))),)

    def text(self):
        return f"exp({_fmt_num(self.lam)})"


@dataclass(frozen=True)
class LevyHalf(Kernel):
    """``K_{1/2}``: inverse Laplace transform of ``exp(-scale sqrt(lam))``."""

    scale: float = 1.0

    def terms(self):
        return (_Term("levy", 1.0, 1.0, 0.0, float(self.scale)),)

    @property
    def singularity_exponent(self):
        return math.inf

    def text(self):
        return "levy12" if self.scale == 1.0 else f"levy12({_fmt_num(self.scale)})"


@dataclass(frozen=True)
class Interpolant(Kernel):
    """``(1 - eps) + eps t``."""

    eps: float

    def terms(self):
        return _combine([_Term("pow", 1.0 - self.eps, 1.0), _Term("pow", float(self.eps), 2.0)])

    def text(self):
        return f"interp({_fmt_num(self.eps)})"


@dataclass(frozen=True)
class Convolution(Kernel):
    f: Kernel
    g: Kernel

    def terms(self):
        return _conv_term_lists(self.f.terms(), self.g.terms())

    @property
    def singularity_exponent(self):
        try:
            return Kernel.singularity_exponent.fget(self)
        except NoClosedForm:
            return self.f.singularity_exponent + self.g.singularity_exponent + 1.0

    def text(self):
        return f"conv({self.f.text()},{self.g.text()})"


@dataclass(frozen=True)
class ConvPower(Kernel):
    f: Kernel
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise OutOfRange("convolution power needs a positive integer")

    def terms(self):
        base = self.f.terms()
        out = base
        for _ in range(int(self.n) - 1):
            out = _conv_term_lists(out, base)
        return out

    @property
    def singularity_exponent(self):
        try:
            return Kernel.singularity_exponent.fget(self)
        except NoClosedForm:
            return self.n * (self.f.singularity_exponent + 1.0) - 1.0

    def text(self):
        return f"pow({self.f.text()},{int(self.n)})"


@dataclass(frozen=True)
class Scaled(Kernel):
    c: complex
    f: Kernel

    def terms(self):
        return _combine([t.scaled(self.c) for t in self.f.terms()])

    @property
    def singularity_exponent(self):
        return self.f.singularity_exponent

    def text(self):
        return f"scale({_fmt_num(self.c)},{self.f.text()})"


@dataclass(frozen=True)
class Sum(Kernel):
    f: Kernel
    g: Kernel

    def terms(self):
        return _combine(list(self.f.terms()) + list(self.g.terms()))

    @property
    def singularity_exponent(self):
        return min(self.f.singularity_exponent, self.g.singularity_exponent)

    def text(self):
        return f"sum({self.f.text()},{self.g.text()})"


@dataclass(frozen=True, eq=False)
class Tabulated(Kernel):
    """Kernel known only through samples on a grid."""

    grid: "Grid"
    values: np.ndarray
    gamma: float = 0.0
    theta: float = 1.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex).ravel()
        if vals.shape[0] != self.grid.n:
            raise GridMismatch("tabulated kernel needs one value per grid node")
        object.__setattr__(self, "values", vals)

    def sampled(self) -> "SampledValues":
        return SampledValues(self.grid.h, self.values, gamma=self.gamma, theta=self.theta)

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr <= 0):
            raise DomainError("kernels are evaluated at t > 0 only")
        out = self.sampled().values_at(t_arr)
        return out if np.ndim(out) else complex(out)

    @property
    def singularity_exponent(self):
        return self.gamma

    @property
    def abscissa(self):
        return 0.0

    def key(self):
        return ("tab", self.grid.T, self.grid.n, self.values.tobytes())

    def text(self):
        return f"tab({self.grid.text()})"


def _from_terms(terms) -> Kernel:
    """Readable canonical descriptor for a term list."""
    parts = []
    for t in terms:
        if t.kind == "pow":
            base = Constant(1.0) if abs(t.p - 1) < _TOL_PARAM else PowerLaw(t.p)
        elif t.kind == "exp" and abs(t.p - 1) < _TOL_PARAM:
            base = Exponential(t.lam)
        elif t.kind == "exp":
            base = Convolution(Exponential(t.lam), Exponential(t.lam)) if abs(t.p - 2) < _TOL_PARAM else _TermKernel(t.scaled(1 / t.c))
        elif t.kind == "powexp":
            base = Convolution(PowerLaw(t.p), Exponential(t.lam))
        else:
            base = LevyHalf(t.sigma)
        c = complex(t.c)
        if isinstance(base, Constant):
            parts.append(Constant(c if c.imag else c.real))
        elif c == 1:
            parts.append(base)
        else:
            parts.append(Scaled(c if c.imag else c.real, base))
    if not parts:
        return Constant(0.0)
    out = parts[0]
    for p in parts[1:]:
        out = Sum(out, p)
    return out


@dataclass(frozen=True)
class _TermKernel(Kernel):
    term: _Term

    def terms(self):
        return (self.term,)

    def text(self):
        return f"term({self.term.kind},{_fmt_num(self.term.p)},{_fmt_num(self.term.lam)})"


def same_kernel(a: Kernel, b: Kernel) -> bool:
    """Structural equality of two descriptors (never numeric sampling)."""
    return a.same_as(b)


def eval_kernel(kernel: Kernel, t):
    """Evaluate a kernel at ``t > 0``."""
    return kernel(t)


# ---------------------------------------------------------------------------
# text form


_TOKEN = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*|[(),]|[^(),\s]+)")


def parse_kernel(text: str) -> Kernel:
    """Parse the compact kernel grammar (``g(0.5)``, ``conv(g(0.5),exp(1))``, ...)."""
    tokens = _TOKEN.findall(text)
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def take(expected=None):
        nonlocal pos
        if pos >= len(tokens):
            raise DomainError(f"unexpected end of kernel text {text!r}")
        tok = tokens[pos]
        if expected is not None and tok != expected:
            raise DomainError(f"expected {expected!r} in kernel text {text!r}, got {tok!r}")
        pos += 1
        return tok

    def number():
        tok = take()
        return _parse_number(tok)

    def kernel():
        name = take()
        if name == "levy12":
            if peek() == "(":
                take("(")
                s = number()
                take(")")
                return LevyHalf(float(s.real))
            return LevyHalf()
        take("(")
        if name == "g":
            k = PowerLaw(float(number().real))
        elif name == "const":
            k = Constant(_real_if(number()))
        elif name == "exp":
            k = Exponential(_real_if(number()))
        elif name == "interp":
            k = Interpolant(float(number().real))
        elif name == "conv":
            a = kernel()
            take(",")
            k = Convolution(a, kernel())
        elif name == "pow":
            a = kernel()
            take(",")
            k = ConvPower(a, int(number().real))
        elif name == "scale":
            c = _real_if(number())
            take(",")
            k = Scaled(c, kernel())
        elif name == "sum":
            a = kernel()
            take(",")
            k = Sum(a, kernel())
        else:
            raise DomainError(f"unknown kernel {name!r}")
        take(")")
        return k

    out = kernel()
    if pos != len(tokens):
        raise DomainError(f"trailing input in kernel text {text!r}")
    return out


def _parse_number(tok: str) -> complex:
    s = tok.replace("i", "j").replace("I", "j")
    try:
        return complex(s)
    except ValueError:
        raise DomainError(f"bad number {tok!r}") from None


def _real_if(z: complex):
    return z.real if z.imag == 0 else z


def format_kernel(kernel: Kernel) -> str:
    return kernel.text()


# ---------------------------------------------------------------------------
# grids and sampled values


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_i = i h``, ``i = 1..n``, on ``(0, T]``."""

    T: float
    n: int

    def __post_init__(self):
        if not (self.T > 0) or int(self.n) != self.n or self.n < 1:
            raise DomainError(f"bad grid T={self.T}, n={self.n}")

    @property
    def h(self) -> float:
        return self.T / self.n

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(1, self.n + 1) * self.h
        t[-1] = self.T
        return t

    def compatible(self, other: "Grid") -> bool:
        return abs(self.h - other.h) <= 1e-12 * self.h

    def node_index(self, t: float) -> int:
        """Index ``i`` with ``t = i h`` (raises if ``t`` is not a node)."""
        i = int(round(t / self.h))
        if abs(i * self.h - t) > 1e-9 * self.h or i < 0:
            raise GridMismatch(f"t={t} is not a grid node (h={self.h})")
        return i

    def text(self) -> str:
        return f"{_fmt_num(self.T)}:{self.n}"

    @classmethod
    def parse(cls, text: str) -> "Grid":
        try:
            T, n = text.split(":")
            return cls(float(T), int(n))
        except ValueError:
            raise DomainError(f"grid must look like T:n, got {text!r}") from None


DEFAULT_ZONE = 5


class SampledValues:
    """Scalar or matrix samples on the nodes ``i h``, ``i = 1..n``.

    Between nodes the samples are read through a local model:

    * on the first ``zone`` cells, a sum ``sum_k c_k (r/h)**(gamma + k theta)``
      fitted through nodes ``1..zone`` (captures the singular start of
      resolvent families, whose expansions live on that lattice);
    * elsewhere, cubic Lagrange interpolation on four neighbouring nodes.

    With ``v0`` given the function is regular at 0, node 0 joins the stencils
    and no zone is used.
    """

    def __init__(self, h, values, gamma=0.0, theta=1.0, zone=DEFAULT_ZONE, v0=None):
        vals = np.asarray(values, dtype=complex)
        self.scalar = vals.ndim == 1
        if self.scalar:
            vals = vals[:, None, None]
        if vals.ndim != 3 or vals.shape[1] != vals.shape[2]:
            raise DomainError("samples must be scalars or square matrices")
        self.h = float(h)
        self.values = vals
        self.n, self.d = vals.shape[0], vals.shape[1]
        self.gamma = float(gamma)
        self.theta = float(theta) if theta and theta > 0 else 1.0
        self.v0 = None if v0 is None else np.broadcast_to(np.asarray(v0, dtype=complex), (self.d, self.d)).copy()
        # samples with a fractional start are interpolated in rho = r**theta
        self.mapped = self.v0 is None and not (self.theta == 1.0 and _is_int(self.gamma))
        if self.v0 is None:
            z = max(1, min(int(zone), self.n))
            self.zone = z
            self.exponents = self.gamma + self.theta * np.arange(z)
            i = np.arange(1, z + 1, dtype=float)
            vand = i[:, None] ** self.exponents[None, :]
            rhs = vals[:z].reshape(z, -1)
            self.coef = np.linalg.solve(vand, rhs).reshape(z, self.d, self.d)
        else:
            self.zone = 0
            self.exponents = np.zeros(0)
            self.coef = np.zeros((0, self.d, self.d), dtype=complex)

    # -- basic views -----------------------------------------------------
    @property
    def T(self) -> float:
        return self.n * self.h

    @property
    def grid(self) -> Grid:
        return Grid(self.T, self.n)

    @property
    def nodes(self):
        return np.arange(1, self.n + 1) * self.h

    def node_values(self):
        return self.values[:, 0, 0].copy() if self.scalar else self.values.copy()

    def like(self, values, gamma=None, theta=None, v0=None, zone=None):
        return SampledValues(
            self.h,
            values,
            gamma=self.gamma if gamma is None else gamma,
            theta=self.theta if theta is None else theta,
            zone=self.zone or DEFAULT_ZONE if zone is None else zone,
            v0=v0,
        )

    def with_v0(self, v0):
        return SampledValues(self.h, self.values if not self.scalar else self.values[:, 0, 0], v0=v0)

    # -- evaluation ------------------------------------------------------
    def at(self, r) -> np.ndarray:
        """Values at arbitrary points ``0 < r <= T`` as an array (len, d, d)."""
        r = np.atleast_1d(np.asarray(r, dtype=float)).ravel()
        x = r / self.h
        if np.any(x > self.n * (1 + 1e-9) + 1e-9) or np.any(x < 0):
            raise DomainError(f"sample read outside (0, {self.T}]")
        out = np.empty((r.size, self.d, self.d), dtype=complex)
        if self.v0 is None:
            in_zone = x <= self.zone
            if in_zone.any():
                xz = x[in_zone]
                with np.errstate(divide="ignore", invalid="ignore"):
                    powers = xz[:, None] ** self.exponents[None, :]
                out[in_zone] = np.einsum("rk,kab->rab", powers, self.coef)
            rest = ~in_zone
            table = self.values
            offset = 1
            lo = 1
        else:
            rest = np.ones(r.size, dtype=bool)
            table = np.concatenate([self.v0[None], self.values])
            offset = 0
            lo = 0
        if rest.any():
            xr = x[rest]
            count = self.n - lo + 1
            deg = min(3, count - 1)
            if deg <= 0:
                out[rest] = table[0]
            else:
                base = np.clip(np.floor(xr).astype(int) - 1, lo, self.n - deg)
                idx = base[:, None] + np.arange(deg + 1)[None, :]
                if self.mapped:
                    # interpolate r**-gamma v(r) as a function of rho = r**theta
                    rho = idx.astype(float) ** self.theta
                    lag = _lagrange_general(xr**self.theta, rho)
                    vals = table[idx - offset] * (idx.astype(float) ** -self.gamma)[:, :, None, None]
                    out[rest] = np.einsum("rk,rkab->rab", lag, vals) * (xr**self.gamma)[:, None, None]
                else:
                    lag = _lagrange_weights(xr - base, deg)
                    out[rest] = np.einsum("rk,rkab->rab", lag, table[idx - offset])
        return out

    def values_at(self, r):
        out = self.at(r)
        shape = np.shape(r)
        if self.scalar:
            return out[:, 0, 0].reshape(shape)
        return out.reshape(shape + (self.d, self.d))

    __call__ = values_at

    # -- arithmetic ------------------------------------------------------
    def scaled(self, c):
        return self._new(self.values * c, v0=None if self.v0 is None else self.v0 * c)

    def plus(self, other: "SampledValues"):
        _check_same_grid(self, other)
        v0 = None if self.v0 is None or other.v0 is None else self.v0 + other.v0
        return self._new(self.values + other.values, gamma=min(self.gamma, other.gamma),
                         theta=min(self.theta, other.theta), v0=v0)

    def matmul_left(self, m):
        m = np.asarray(m, dtype=complex)
        v0 = None if self.v0 is None else m @ self.v0
        return self._new(np.einsum("ab,ibc->iac", m, self.values), scalar=False, v0=v0)

    def _new(self, vals, gamma=None, theta=None, scalar=None, v0=None):
        scalar = self.scalar if scalar is None else scalar
        v = vals[:, 0, 0] if scalar and vals.shape[1] == 1 else vals
        if v0 is not None:
            return SampledValues(self.h, v, v0=v0)
        return SampledValues(self.h, v, gamma=self.gamma if gamma is None else gamma,
                             theta=self.theta if theta is None else theta, zone=self.zone or DEFAULT_ZONE)

    def restrict(self, n: int) -> "SampledValues":
        v = self.values[:n]
        return SampledValues(self.h, v[:, 0, 0] if self.scalar else v, gamma=self.gamma, theta=self.theta,
                             zone=self.zone or DEFAULT_ZONE, v0=self.v0)


def _lagrange_weights(u, deg):
    """Lagrange basis on nodes 0..deg evaluated at ``u``."""
    nodes = np.arange(deg + 1, dtype=float)
    w = np.ones((u.size, deg + 1))
    for k in range(deg + 1):
        for j in range(deg + 1):
            if j != k:
                w[:, k] *= (u - nodes[j]) / (nodes[k] - nodes[j])
    return w


def _lagrange_general(u, nodes):
    """Lagrange basis for per-row node sets ``nodes`` (r, k) at points ``u`` (r,)."""
    k = nodes.shape[1]
    w = np.ones(nodes.shape)
    for i in range(k):
        for j in range(k):
            if j != i:
                w[:, i] *= (u - nodes[:, j]) / (nodes[:, i] - nodes[:, j])
    return w


def _check_same_grid(a: SampledValues, b: SampledValues):
    if abs(a.h - b.h) > 1e-12 * a.h or a.n != b.n:
        raise GridMismatch("sampled values live on different grids")


def sample_kernel(kernel: Kernel, grid: Grid, theta: float = 1.0) -> SampledValues:
    """Samples of a kernel on a grid (exact node values)."""
    if isinstance(kernel, Tabulated):
        return kernel.sampled()
    vals = np.asarray(kernel(grid.nodes), dtype=complex)
    gamma = kernel.singularity_exponent
    if not np.isfinite(gamma) or gamma >= 0 and _is_int(gamma):
        return SampledValues(grid.h, vals, v0=kernel.value_at_zero() if np.isfinite(kernel.value_at_zero()) else 0.0)
    return SampledValues(grid.h, vals, gamma=gamma, theta=theta)


# ---------------------------------------------------------------------------
# operations


def _as_operand(x, h):
    from . import _quadrature as q

    return q.as_operand(x, h)


def conv1(f, g, grid: Grid) -> SampledValues:
    """``(f*g)(t_i)`` on every grid node.

    Closed-form descriptors are convolved symbolically; anything else goes
    through singularity-aware product integration.
    """
    from . import _quadrature as q

    for x in (f, g):
        gam = x.singularity_exponent if isinstance(x, Kernel) else x.gamma
        if gam <= -1:
            raise NotIntegrable(f"factor with singularity exponent {gam} <= -1 is not integrable")
        if isinstance(x, SampledValues) and abs(x.h - grid.h) > 1e-12 * grid.h:
            raise GridMismatch("sampled factor step differs from grid step")
    if isinstance(f, Kernel) and isinstance(g, Kernel):
        try:
            k = Convolution(f, g)
            k.terms()
            return sample_kernel(k, grid)
        except (NoClosedForm, OutOfRange):
            pass
    values = q.conv_nodes(q.as_operand(f, grid.h), q.as_operand(g, grid.h), grid.n)
    scalar = all((isinstance(x, Kernel) or x.scalar) for x in (f, g))
    gamma = _exp_of(f) + _exp_of(g) + 1.0
    theta = min(_theta_of(f), _theta_of(g))
    if not np.isfinite(gamma):
        return SampledValues(grid.h, values[:, 0, 0] if scalar else values, v0=0.0)
    return SampledValues(grid.h, values[:, 0, 0] if scalar else values, gamma=gamma, theta=theta)


def _exp_of(x):
    if isinstance(x, Kernel):
        return x.singularity_exponent
    return x.gamma if x.v0 is None else 0.0


def _theta_of(x):
    if isinstance(x, SampledValues):
        return x.theta
    return 1.0


def conv_power(f: Kernel, n: int, grid: Grid) -> SampledValues:
    """``f^{*n}`` on the grid (closed form when available)."""
    if int(n) != n or n < 1:
        raise OutOfRange("convolution power needs n >= 1")
    if n == 1:
        return sample_kernel(f, grid) if not isinstance(f, SampledValues) else f
    try:
        k = ConvPower(f, int(n))
        k.terms()
        return sample_kernel(k, grid)
    except NoClosedForm:
        pass
    out = f
    for _ in range(int(n) - 1):
        out = conv1(out, f, grid)
    return out


def multiplier_M(g, grid: Grid) -> SampledValues:
    """Pointwise product by the node coordinate, ``M(g)(s) = s g(s)``."""
    if isinstance(g, Kernel):
        g = sample_kernel(g, grid)
    if abs(g.h - grid.h) > 1e-12 * grid.h:
        raise GridMismatch("grid step mismatch")
    t = g.nodes
    vals = g.values * t[:, None, None]
    v = vals[:, 0, 0] if g.scalar else vals
    if g.v0 is not None:
        return SampledValues(g.h, v, v0=0.0)
    return SampledValues(g.h, v, gamma=g.gamma + 1.0, theta=g.theta)


@dataclass(frozen=True)
class PairSolution:
    """Kernels ``b, c`` with ``a*b = k`` (or ``1*k``) and ``a*c = 1`` (or ``t``)."""

    b: Kernel | None
    c: Kernel | None
    b_valid: bool
    c_valid: bool
    mode: str
    reasons: tuple = field(default_factory=tuple)

    def require(self, which="bc"):
        """Raise :class:`OutOfRange` naming the first violated inequality."""
        if "c" in which and not self.c_valid:
            raise OutOfRange(self.reasons[0] if self.reasons else "c invalid")
        if "b" in which and not self.b_valid:
            raise OutOfRange([r for r in self.reasons if r.startswith("b")][0] if self.reasons else "b invalid")
        return self


def solve_pair(a: Kernel, k: Kernel, mode: str = "one") -> PairSolution:
    """Solve ``(a*c) = 1`` and ``(a*b) = k`` for power-law pairs.

    ``mode="t"`` solves ``(a*c) = t`` and ``(a*b) = 1*k`` instead.
    """
    ca, ck = a.canonical(), k.canonical()
    alpha = _power_order(ca)
    kappa = _power_order(ck)
    if alpha is None or kappa is None:
        raise NoClosedForm("solve_pair handles PowerLaw kernels only")
    beta = kappa - 1.0
    shift = 1.0 if mode == "one" else 2.0
    if mode not in ("one", "t"):
        raise DomainError("mode is 'one' or 't'")
    reasons = []
    c_order = shift - alpha
    c_valid = 0 < alpha < shift
    if not c_valid:
        reasons.append(f"c: need 0 < alpha < {shift:g}, got alpha={alpha:g}")
    b_order = beta - alpha + shift
    b_valid = beta - alpha > -shift
    if not b_valid:
        reasons.append(f"b: need beta - alpha > {-shift:g}, got beta - alpha = {beta - alpha:g}")
    c = PowerLaw(c_order) if c_valid else None
    b = PowerLaw(b_order) if b_valid else None
    return PairSolution(b, c, b_valid, c_valid, mode, tuple(reasons))


def _power_order(k: Kernel):
    if isinstance(k, PowerLaw):
        return float(k.alpha)
    if isinstance(k, Constant) and k.c == 1:
        return 1.0
    return None
