"""Resolvent families realized from finite generators.

A family ``S`` for the pair ``(a, k)`` and generator ``A`` solves the
Volterra equation ``A (a*S)(t) = S(t) - k(t)``.  For ``a = g_alpha`` and
``k = sum_j c_j g_{p_j}`` the solution is

    S(t) = sum_j c_j t**(p_j - 1) E_{alpha, p_j}(t**alpha A),

which covers semigroups, cosine families, the fractional pairs and the
convoluted semigroups.  These closed forms are candidates only; the
Volterra residual is what certifies a family.
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _quadrature as quad
from .errors import DomainError, GridMismatch, PrecisionLoss, UncertifiedSpectrum, UnknownPair
from .kernels import (
    Constant,
    Grid,
    Interpolant,
    Kernel,
    LevyHalf,
    PowerLaw,
    SampledValues,
    _is_int,
    conv1,
    parse_kernel,
    sample_kernel,
)
from .report import ResidualReport
from .special import ml, ml_matrix, ml_modulus

PROBE_SEED = 0x5EED


# ---------------------------------------------------------------------------
# generators


_COMPLEX = re.compile(r"^([+-]?[^+-]*(?:[eE][+-]?\d+)?)?([+-][^+-]*(?:[eE][+-]?\d+)?i)?$")


def parse_complex(tok: str) -> complex:
    """Parse ``a+bi`` style entries (also plain reals and ``bi``)."""
    s = tok.strip().replace("I", "i").replace("j", "i")
    if not s:
        raise DomainError("empty matrix entry")
    try:
        return complex(s.replace("i", "j"))
    except ValueError:
        pass
    try:
        if s.endswith("i"):
            body = s[:-1]
            # split at the last sign that is not part of an exponent
            for pos in range(len(body) - 1, 0, -1):
                if body[pos] in "+-" and body[pos - 1] not in "eE":
                    re_part, im_part = body[:pos], body[pos:]
                    return complex(float(re_part), float(im_part if im_part not in "+-" else im_part + "1"))
            return complex(0.0, float(body if body not in "+-" else body + "1"))
        return complex(float(s))
    except ValueError:
        raise DomainError(f"bad matrix entry {tok!r}") from None


def format_complex(z: complex) -> str:
    z = complex(z)
    return f"{z.real!r}{'+' if z.imag >= 0 or math.isnan(z.imag) else '-'}{abs(z.imag)!r}i"


@dataclass(frozen=True, eq=False)
class Generator:
    """Finite complex matrix standing in for the generator ``A``."""

    matrix: np.ndarray
    form: str = "dense"
    name: str = ""
    inner: "Generator | None" = None

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=complex))
        if m.shape[0] != m.shape[1]:
            raise DomainError("generator must be square")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def dense(cls, m, name=""):
        return cls(np.asarray(m, dtype=complex), "dense", name)

    @classmethod
    def diagonal(cls, values, name=""):
        return cls(np.diag(np.asarray(values, dtype=complex)), "diagonal", name)

    @classmethod
    def scalar(cls, value, name=""):
        return cls(np.array([[complex(value)]]), "dense", name)

    @classmethod
    def block(cls, inner: "Generator"):
        """``[[0, I], [A, 0]]`` built on an inner generator ``A``."""
        d = inner.d
        m = np.zeros((2 * d, 2 * d), dtype=complex)
        m[:d, d:] = np.eye(d)
        m[d:, :d] = inner.matrix
        return cls(m, "block", f"block({inner.name})", inner)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_diagonal(self) -> bool:
        m = self.matrix
        return np.count_nonzero(m - np.diag(np.diag(m))) == 0

    @property
    def spectral_bound(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.matrix))))

    def gershgorin_radius(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(np.diag(m)) + np.sum(np.abs(m), axis=1) - np.abs(np.diag(m))))

    # -- file format ----------------------------------------------------
    def dumps(self) -> str:
        if self.is_diagonal and self.form == "diagonal":
            return "diag\n" + " ".join(format_complex(z) for z in np.diag(self.matrix)) + "\n"
        lines = [str(self.d)]
        lines += [" ".join(format_complex(z) for z in row) for row in self.matrix]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, name: str = "") -> "Generator":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
        if not lines:
            raise DomainError("empty generator file")
        head = lines[0].lower()
        if head == "diag":
            vals = [parse_complex(tok) for ln in lines[1:] for tok in ln.split()]
            if not vals:
                raise DomainError("diagonal generator without entries")
            return cls.diagonal(vals, name)
        try:
            d = int(head)
        except ValueError:
            raise DomainError(f"generator file must start with d or 'diag', got {lines[0]!r}") from None
        rows = [[parse_complex(tok) for tok in ln.split()] for ln in lines[1 : 1 + d]]
        if len(rows) != d or any(len(r) != d for r in rows):
            raise DomainError(f"generator file needs {d} rows of {d} entries")
        return cls.dense(np.array(rows), name)

    @classmethod
    def read(cls, path) -> "Generator":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read(), name=str(path))

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())


# ---------------------------------------------------------------------------
# sampled families


@dataclass(frozen=True, eq=False)
class SampledFamily:
    """Samples ``S(t_i)`` on a grid together with the kernel pair."""

    grid: Grid
    values: np.ndarray
    a: Kernel
    k: Kernel
    generator: Generator | None = None
    provenance: dict = field(default_factory=dict)
    tau: float = math.inf
    gamma: float = 0.0
    theta: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None, None]
        if v.shape[0] != self.grid.n or v.shape[1] != v.shape[2]:
            raise GridMismatch("family values must be (n, d, d) on the grid")
        object.__setattr__(self, "values", v)

    @property
    def pair(self):
        return self.a, self.k

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def nodes(self):
        return self.grid.nodes

    @property
    def regular(self) -> bool:
        """Samples are smooth in ``t`` up to the origin (integer exponents)."""
        return _is_int(self.gamma) and self.gamma >= 0 and _is_int(self.theta)

    @cached_property
    def sampled(self) -> SampledValues:
        if self.regular:
            if abs(self.gamma) < 1e-12:
                v0 = complex(self.k.value_at_zero()) * np.eye(self.d)
            else:
                v0 = np.zeros((self.d, self.d))
            return SampledValues(self.h, self.values, v0=v0)
        return SampledValues(self.h, self.values, gamma=self.gamma, theta=self.theta)

    def at(self, t):
        """Read the family at arbitrary ``0 < t <= T`` (local model between nodes)."""
        return self.sampled.values_at(np.asarray(t, dtype=float))

    def value_at_node(self, t: float) -> np.ndarray:
        return self.values[self.grid.node_index(t) - 1]

    def restrict(self, n_nodes: int) -> "SampledFamily":
        if not 1 <= n_nodes <= self.grid.n:
            raise DomainError("restriction outside the grid")
        g = Grid(n_nodes * self.h, n_nodes)
        return self._replace(grid=g, values=self.values[:n_nodes])

    def perturbed(self, eps: float) -> "SampledFamily":
        """``S + eps I`` (negative control)."""
        prov = dict(self.provenance, perturbed=eps)
        return self._replace(values=self.values + eps * np.eye(self.d)[None], provenance=prov)

    def _replace(self, **changes) -> "SampledFamily":
        fields = dict(
            grid=self.grid,
            values=self.values,
            a=self.a,
            k=self.k,
            generator=self.generator,
            provenance=self.provenance,
            tau=self.tau,
            gamma=self.gamma,
            theta=self.theta,
        )
        fields.update(changes)
        return SampledFamily(**fields)

    def commutator_norm(self) -> float:
        """``max_i ||A S(t_i) - S(t_i) A||``."""
        if self.generator is None:
            return 0.0
        A = self.generator.matrix
        comm = np.einsum("ab,ibc->iac", A, self.values) - np.einsum("iab,bc->iac", self.values, A)
        return float(np.max(np.linalg.norm(comm, ord=2, axis=(1, 2))))

    def normalization_trend(self, count: int = 3) -> np.ndarray:
        """``||S(t_i)/k(t_i) - I||`` at the first ``count`` nodes."""
        t = self.nodes[:count]
        kv = np.asarray(self.k(t), dtype=complex)
        dev = self.values[:count] / kv[:, None, None] - np.eye(self.d)[None]
        return np.linalg.norm(dev, ord=2, axis=(1, 2))

    # -- CSV ------------------------------------------------------------
    def dumps_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# pair a={self.a.text()} k={self.k.text()} gamma={float(self.gamma)!r} theta={float(self.theta)!r} "
                  f"tau={float(self.tau)!r}\n")
        buf.write(f"# grid {self.grid.text()} d={self.d}\n")
        if self.generator is not None:
            buf.write("# generator " + " ".join(format_complex(z) for z in self.generator.matrix.ravel()) + "\n")
        for i, (t, v) in enumerate(zip(self.nodes, self.values), start=1):
            entries = ",".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in v.ravel())
            buf.write(f"{i},{float(t)!r},{entries}\n")
        return buf.getvalue()

    def write_csv(self, path):
        from .cli import atomic_write

        atomic_write(path, self.dumps_csv())


def loads_family_csv(text: str) -> SampledFamily:
    """Inverse of :meth:`SampledFamily.dumps_csv`."""
    meta = {}
    rows = []
    gen = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("pair"):
                for tok in body.split()[1:]:
                    key, _, val = tok.partition("=")
                    meta[key] = val
            elif body.startswith("grid"):
                parts = body.split()
                meta["grid"] = parts[1]
                meta["d"] = int(parts[2].split("=")[1])
            elif body.startswith("generator"):
                gen = [parse_complex(tok) for tok in body.split()[1:]]
            continue
        rows.append([float(x) for x in line.split(",")])
    if not rows or "grid" not in meta:
        raise DomainError("family CSV without grid header or rows")
    d = meta["d"]
    data = np.array(rows)
    vals = (data[:, 2::2] + 1j * data[:, 3::2]).reshape(-1, d, d)
    grid = Grid.parse(meta["grid"])
    generator = Generator.dense(np.array(gen).reshape(d, d)) if gen is not None else None
    return SampledFamily(
        grid,
        vals,
        parse_kernel(meta["a"]),
        parse_kernel(meta["k"]),
        generator,
        {"kind": "csv"},
        float(meta.get("tau", "inf")),
        float(meta.get("gamma", 0.0)),
        float(meta.get("theta", 1.0)),
    )


def read_family_csv(path) -> SampledFamily:
    with open(path, encoding="utf-8") as fh:
        return loads_family_csv(fh.read())


# ---------------------------------------------------------------------------
# construction


def _pair_exponents(a: Kernel, k: Kernel):
    return k.singularity_exponent, a.singularity_exponent + 1.0


def _ml_family_values(alpha: float, k_terms, A: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``sum_j c_j t**(p_j-1) E_{alpha,p_j}(t**alpha A)`` at every node."""
    d = A.shape[0]
    out = np.zeros((t.size, d, d), dtype=complex)
    diag = np.count_nonzero(A - np.diag(np.diag(A))) == 0
    if diag:
        lam = np.diag(A)
        for c, p in k_terms:
            z = (t[:, None] ** alpha) * lam[None, :]
            e = np.asarray(ml(alpha, p, z.ravel())).reshape(z.shape)
            out[:, np.arange(d), np.arange(d)] += c * t[:, None] ** (p - 1.0) * e
        return out
    w, v = np.linalg.eig(A)
    if np.linalg.cond(v) < 1e6:
        vinv = np.linalg.inv(v)
        for c, p in k_terms:
            z = (t[:, None] ** alpha) * w[None, :]
            e = np.asarray(ml(alpha, p, z.ravel())).reshape(z.shape)
            f = c * t[:, None] ** (p - 1.0) * e
            out += np.einsum("ab,ib,bc->iac", v, f, vinv)
        return out
    for i, ti in enumerate(t):
        for c, p in k_terms:
            out[i] += c * ti ** (p - 1.0) * ml_matrix(alpha, p, ti**alpha * A)
    return out


def _k_power_terms(k: Kernel):
    terms = []
    for term in k.terms():
        if term.kind != "pow":
            raise UnknownPair(f"k={k.text()} is not a sum of power kernels")
        terms.append((complex(term.c), float(term.p)))
    return terms


def ml_family(a: Kernel, k: Kernel, generator: Generator, grid: Grid, label: str) -> SampledFamily:
    """Closed-form family for ``a = g_alpha`` (or ``1``) and ``k`` a sum of power kernels."""
    ca = a.canonical()
    if isinstance(ca, PowerLaw):
        alpha = float(ca.alpha)
    elif isinstance(ca, Constant) and ca.c == 1:
        alpha = 1.0
    else:
        raise UnknownPair(f"no closed form for a={a.text()}")
    terms = _k_power_terms(k)
    try:
        vals = _ml_family_values(alpha, terms, generator.matrix, grid.nodes)
    except PrecisionLoss as exc:
        raise UncertifiedSpectrum(f"generator spectrum outside the certified Mittag-Leffler regimes: {exc}") from None
    gamma, theta = _pair_exponents(a, k)
    return SampledFamily(grid, vals, a, k, generator, {"kind": "closed-form", "pair": label}, math.inf, gamma, theta)


def diagonal_sequence_coefficients(tau: float, M: int) -> np.ndarray:
    """``a_m = m/tau + i sqrt((e^m/m)^2 - (m/tau)^2)``, ``m = 1..M``."""
    m = np.arange(1, M + 1, dtype=float)
    return m / tau + 1j * np.sqrt(np.exp(2 * m) / m**2 - (m / tau) ** 2 + 0j)


def diagonal_sequence_entries(alpha: float, beta: float, tau: float, M: int, t) -> np.ndarray:
    """``(g_beta * E_alpha((a_m .)^alpha))(t) = t^beta E_{alpha,beta+1}((a_m t)^alpha)``.

    Shape (len(t), M).  For very large ``|a_m t|`` the phase of an entry is
    beyond double precision; the modulus, which is what norms use, is not.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    am = diagonal_sequence_coefficients(tau, M)
    z = (am[None, :] * t[:, None]) ** alpha
    e = np.asarray(ml(alpha, beta + 1.0, z.ravel())).reshape(z.shape)
    return t[:, None] ** beta * e


def diagonal_sequence_norm(alpha, beta, tau, M, t) -> np.ndarray:
    """Truncated operator norm ``max_{m <= M} |entry_m(t)|``.

    Moduli go through :func:`ml_modulus`, so entries whose phase is lost in
    double precision still contribute exact-enough sizes.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    am = diagonal_sequence_coefficients(tau, M)
    z = (am[None, :] * t[:, None]) ** alpha
    est = np.array([[ml_modulus(alpha, beta + 1.0, zz) for zz in row] for row in z])
    mods = t[:, None] ** beta * est[..., 0]
    bounds = t[:, None] ** beta * est[..., 1]
    norm = mods.max(axis=1)
    # the max is resolved when no entry's bound reaches past it by more than 1e-3
    spread = np.max(mods + bounds, axis=1) - norm
    if np.any(spread > 1e-3 * norm):
        raise PrecisionLoss("truncated norm not resolved in double precision")
    return norm


def _parse_pair(name: str):
    m = re.fullmatch(r"\s*([A-Za-z_0-9]+)\s*(?:\((.*)\))?\s*", name)
    if not m:
        raise UnknownPair(f"bad pair name {name!r}")
    head, args = m.group(1), m.group(2)
    arglist = [s.strip() for s in _split_args(args)] if args else []
    return head, arglist


def _split_args(s):
    depth, cur, out = 0, "", []
    for ch in s:
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    out.append(cur)
    return out


PAIR_NAMES = ("semigroup", "cosine", "frac", "frac_aa", "seq78", "block", "convoluted", "resolvent_interp", "mult")


def pair_kernels(name: str, **params):
    """Kernel pair ``(a, k)`` for a named family."""
    head, args = _parse_pair(name)
    f = [float(x) for x in args] if head not in ("convoluted", "block") else args
    if head == "semigroup":
        return Constant(1.0), Constant(1.0)
    if head == "cosine":
        return PowerLaw(2.0), Constant(1.0)
    if head == "frac":
        alpha = f[0] if f else params["alpha"]
        beta = f[1] if len(f) > 1 else params.get("beta", 0.0)
        return PowerLaw(alpha), _power_or_const(beta + 1.0)
    if head == "frac_aa":
        alpha = f[0] if f else params["alpha"]
        return PowerLaw(alpha), PowerLaw(alpha)
    if head == "seq78":
        alpha, beta = (f[0], f[1]) if len(f) >= 2 else (params["alpha"], params["beta"])
        return PowerLaw(alpha), _power_or_const(beta + 1.0)
    if head == "block":
        b = parse_kernel(args[0]) if args else params["b"]
        from .kernels import ConvPower

        return b, ConvPower(b, 3)
    if head == "convoluted":
        k = parse_kernel(args[0]) if args else params["k"]
        return Constant(1.0), k
    if head == "resolvent_interp":
        eps = f[0] if f else params["eps"]
        return Interpolant(eps), Constant(1.0)
    if head == "mult":
        alpha = f[0] if f else params["alpha"]
        return PowerLaw(alpha), LevyHalf()
    raise UnknownPair(f"unknown pair {name!r}; known: {', '.join(PAIR_NAMES)}")


def _power_or_const(p):
    return Constant(1.0) if abs(p - 1.0) < 1e-14 else PowerLaw(p)


def make_family(pair_name: str, generator: Generator | None, grid: Grid, **params) -> SampledFamily:
    """Sample a named family on a grid.

    ``pair_name`` is one of ``semigroup``, ``cosine``, ``frac(alpha,beta)``,
    ``frac_aa(alpha)``, ``seq78(alpha,beta,tau,M)``, ``block(b)``,
    ``convoluted(k)``, ``resolvent_interp(eps)`` or ``mult(alpha)``.
    Parameters may also be passed as keywords.
    """
    head, args = _parse_pair(pair_name)
    a, k = pair_kernels(pair_name, **params)
    if head in ("semigroup", "cosine", "frac", "frac_aa", "convoluted"):
        if generator is None:
            raise DomainError("family needs a generator")
        return ml_family(a, k, generator, grid, pair_name)
    if head == "seq78":
        alpha, beta, tau, M = (float(args[0]), float(args[1]), float(args[2]), int(float(args[3]))) if len(args) == 4 else (
            params["alpha"], params["beta"], params["tau"], int(params["M"]))
        am = diagonal_sequence_coefficients(tau, M)
        gen = Generator.diagonal(am**alpha, name=f"seq78 a_m^alpha (M={M})")
        vals = np.zeros((grid.n, M, M), dtype=complex)
        vals[:, np.arange(M), np.arange(M)] = diagonal_sequence_entries(alpha, beta, tau, M, grid.nodes)
        gamma, theta = _pair_exponents(a, k)
        return SampledFamily(grid, vals, a, k, gen, {"kind": "closed-form", "pair": pair_name}, beta * tau, gamma, theta)
    if head == "block":
        return _block_family(a, generator, grid, pair_name)
    if head == "resolvent_interp":
        return _interp_resolvent_family(a, k, generator, grid, pair_name)
    if head == "mult":
        return _mult_family(a, k, generator, grid, pair_name)
    raise UnknownPair(pair_name)


def _block_family(b: Kernel, inner: Generator, grid: Grid, label: str) -> SampledFamily:
    """``S = [[b*R, a*R], [R - a I, b*R]]`` with ``a = b*b`` and ``R`` the inner ``(a, a)`` family."""
    cb = b.canonical()
    if not isinstance(cb, PowerLaw) and not (isinstance(cb, Constant) and cb.c == 1):
        raise UnknownPair("block families need b = g_gamma")
    gam = float(cb.alpha) if isinstance(cb, PowerLaw) else 1.0
    A = inner.matrix
    d = A.shape[0]
    t = grid.nodes
    R = _ml_family_values(2 * gam, [(1.0, 2 * gam)], A, t)
    bR = _ml_family_values(2 * gam, [(1.0, 3 * gam)], A, t)
    aR = _ml_family_values(2 * gam, [(1.0, 4 * gam)], A, t)
    a_vals = np.asarray(PowerLaw(2 * gam)(t) if abs(2 * gam - 1) > 1e-14 else np.ones_like(t), dtype=complex)
    vals = np.zeros((t.size, 2 * d, 2 * d), dtype=complex)
    vals[:, :d, :d] = bR
    vals[:, :d, d:] = aR
    vals[:, d:, :d] = R - a_vals[:, None, None] * np.eye(d)[None]
    vals[:, d:, d:] = bR
    from .kernels import ConvPower

    k = ConvPower(b, 3)
    gamma, theta = _pair_exponents(b, k)
    return SampledFamily(grid, vals, b, k, Generator.block(inner), {"kind": "closed-form", "pair": label}, math.inf, gamma, theta)


def _interp_resolvent_family(a, k, generator, grid, label):
    """``a = (1-eps) + eps t``, ``k = 1``: ``S^(z) = z / (z^2 - lam (1-eps) z - lam eps)`` per eigenvalue."""
    eps = a.eps
    A = generator.matrix
    w, v = np.linalg.eig(A)
    if np.linalg.cond(v) > 1e6:
        raise UncertifiedSpectrum("resolvent_interp needs a diagonalizable generator")
    t = grid.nodes
    f = np.zeros((t.size, w.size), dtype=complex)
    for j, lam in enumerate(w):
        p, q = lam * (1 - eps), lam * eps
        disc = np.sqrt(p * p + 4 * q + 0j)
        r1, r2 = (p + disc) / 2, (p - disc) / 2
        if abs(r1 - r2) > 1e-8 * max(1.0, abs(r1)):
            f[:, j] = (r1 * np.exp(r1 * t) - r2 * np.exp(r2 * t)) / (r1 - r2)
        else:
            f[:, j] = np.exp(r1 * t) * (1 + r1 * t)
    vals = np.einsum("ab,ib,bc->iac", v, f, np.linalg.inv(v))
    return SampledFamily(grid, vals, a, k, generator, {"kind": "closed-form", "pair": label}, math.inf, 0.0, 1.0)


def _mult_family(a, k, generator, grid, label):
    """Diagonal surrogate of a multiplication operator with ``k = K_{1/2}``.

    Entrywise ``S = K + lam K * (t^{alpha-1} E_{alpha,alpha}(lam t^alpha))``.
    """
    if generator is None or not generator.is_diagonal:
        raise DomainError("mult families need a diagonal generator")
    alpha = float(a.alpha)
    t = grid.nodes
    kv = np.asarray(k(t), dtype=complex)
    lam = np.diag(generator.matrix)
    vals = np.zeros((t.size, lam.size, lam.size), dtype=complex)
    for j, l in enumerate(lam):
        res = t ** (alpha - 1) * np.asarray(ml(alpha, alpha, l * t**alpha))
        sv = SampledValues(grid.h, res, gamma=alpha - 1.0, theta=alpha)
        vals[:, j, j] = kv + l * conv1(k, sv, grid).node_values()
    return SampledFamily(grid, vals, a, k, generator, {"kind": "quadrature", "pair": label}, math.inf, 2.0, alpha)


# ---------------------------------------------------------------------------
# residuals


def default_probes(d: int, seed: int = PROBE_SEED) -> np.ndarray:
    """Standard basis plus one random complex unit vector (columns)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    x /= np.linalg.norm(x)
    return np.concatenate([np.eye(d, dtype=complex), x[:, None]], axis=1)


def conv_with_family(kernel, fam: SampledFamily, n_out: int | None = None) -> np.ndarray:
    """``(kernel * S)(t_i)`` on the family grid, shape (n, d, d)."""
    n_out = fam.grid.n if n_out is None else n_out
    X = quad.as_operand(kernel, fam.h) if not isinstance(kernel, quad.Operand) else kernel
    return quad.conv_nodes(X, quad.SampledOperand(fam.sampled), n_out)


def volterra_residual(fam: SampledFamily, probes=None, i0: int = 3, tol: float = 1e-4) -> ResidualReport:
    """``||A (a*S)(t_i) x - S(t_i) x + k(t_i) x||`` over nodes and probes.

    Nodes before ``i0`` are reported separately (singular first cells).
    """
    if fam.generator is None:
        raise DomainError("volterra residual needs the generator")
    A = fam.generator.matrix
    P = default_probes(fam.d) if probes is None else np.asarray(probes, dtype=complex).reshape(fam.d, -1)
    aS = conv_with_family(fam.a, fam)
    kv = np.asarray(fam.k(fam.nodes), dtype=complex)
    R = np.einsum("ab,ibc->iac", A, aS) - fam.values + kv[:, None, None] * np.eye(fam.d)[None]
    per = np.linalg.norm(np.einsum("iab,bp->iap", R, P), axis=1)  # (n, probes)
    r = per.max(axis=1)
    scale = max(1.0, float(np.max(np.linalg.norm(fam.values, ord=2, axis=(1, 2)))))
    i0 = min(i0, fam.grid.n - 1)
    return ResidualReport(
        "volterra",
        r[i0:],
        tol,
        locations=fam.nodes[i0:],
        scale=scale,
        metadata={
            "grid": fam.grid.text(),
            "pair": [fam.a.text(), fam.k.text()],
            "first_nodes": r[:i0].tolist(),
            "commutator": fam.commutator_norm(),
            "probes": P.shape[1],
        },
    )
