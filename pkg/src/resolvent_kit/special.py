"""Two-parameter Mittag-Leffler function and reciprocal Gamma.

``E_{a,b}(z) = sum_n z**n / Gamma(a*n + b)`` is evaluated in one of three
regimes:

* ``series``: double-precision power series for ``|z| <= R0(a) = 5 + 10 a``,
  accepted when the round-off estimate (machine epsilon times the largest
  term) stays below ``1e-10`` relative;
* ``asymptotic``: for ``|z| > R0`` inside the sector ``|arg z| <= a pi / 2``,
  the exponential terms ``(1/a) zeta**(1-b) exp(zeta)`` over every branch
  ``zeta`` of ``z**(1/a)`` with ``-a pi < arg z + 2 pi m <= a pi`` plus the
  algebraic tail ``-sum_k z**-k / Gamma(b - a k)`` cut at its smallest term;
* ``extended``: the same power series in multiprecision arithmetic, used
  outside the sector and whenever the double-precision regimes cannot
  certify their result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.special import gammaln, rgamma as _rgamma

from . import _accel
from .errors import NonConvergent, OutOfRange, PrecisionLoss

CERTIFY_RTOL = 1e-10
_EPS = np.finfo(float).eps
# multiprecision work is capped; beyond this the request is not certifiable
_MAX_EXT_TERMS = 400_000
_MAX_EXT_DPS = 6000
_EXT_BUDGET = 2_000_000  # terms x digits


@dataclass(frozen=True)
class MLParams:
    """Parameters ``(alpha, beta)`` of ``E_{alpha,beta}``."""

    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0):
            raise OutOfRange(f"alpha must be > 0, got {self.alpha}")
        if not (self.beta > 0):
            raise OutOfRange(f"beta must be > 0, got {self.beta}")


@dataclass(frozen=True)
class MLValue:
    """Value with its error estimate and the regime that produced it."""

    value: complex
    error: float
    regime: str


def R0(alpha: float) -> float:
    """Radius below which the double-precision series is attempted."""
    return 5.0 + 10.0 * alpha


def rgamma(x):
    """Reciprocal Gamma ``1/Gamma(x)``; zero at the poles ``0, -1, -2, ...``."""
    return _rgamma(x)


def _series_coefficients(alpha, beta, zmax):
    """Coefficients ``1/Gamma(alpha n + beta)`` long enough for ``|z| <= zmax``."""
    n = 64
    logz = math.log(zmax) if zmax > 0 else -50.0
    while True:
        k = np.arange(n)
        logt = k * logz - gammaln(alpha * k + beta)
        peak = int(np.argmax(logt))
        if peak < n - 2 and logt[-1] < logt[peak] - 40.0 and logt[-1] < -40.0:
            break
        if n > 2_000_000:
            return None
        n *= 2
    return rgamma(alpha * np.arange(n) + beta)


def _series_double(alpha, beta, z):
    zmax = float(np.max(np.abs(z))) if z.size else 0.0
    coef = _series_coefficients(alpha, beta, zmax)
    if coef is None:
        nan = np.full(z.shape, np.nan, dtype=complex)
        return nan, np.full(z.shape, np.inf)
    total, biggest, used = _accel.ml_series(z, coef)
    err = 4.0 * _EPS * biggest * np.sqrt(np.maximum(used, 1))
    return total, err


def _branches(alpha, z):
    """Branches ``zeta = z**(1/alpha)`` whose residues enter the expansion."""
    r = abs(z) ** (1.0 / alpha)
    theta = np.angle(z)
    out = []
    m_lo = int(math.floor((-alpha * math.pi - theta) / (2 * math.pi))) - 1
    m_hi = int(math.ceil((alpha * math.pi - theta) / (2 * math.pi))) + 1
    for m in range(m_lo, m_hi + 1):
        phi = theta + 2 * math.pi * m
        if -alpha * math.pi < phi <= alpha * math.pi:
            out.append(r * np.exp(1j * phi / alpha))
    return out


def _asymptotic_one(alpha, beta, z):
    z = complex(z)
    main = 0j
    scale = 0.0
    for zeta in _branches(alpha, z):
        if zeta.real > 700.0:
            raise PrecisionLoss(f"E_{{{alpha},{beta}}}({z}) overflows double precision")
        # zeta**(1-beta) on the branch used to build zeta
        term = np.exp((1.0 - beta) * np.log(zeta) + zeta) / alpha
        main += term
        scale = max(scale, abs(term) * (1.0 + abs(zeta)))
    tail = 0j
    last = math.inf
    err = math.inf
    zinv = 1.0 / z
    power = 1.0 + 0j
    for k in range(1, 200):
        power *= zinv
        term = power * rgamma(beta - alpha * k)
        mag = abs(term)
        if mag == 0.0:
            # poles of Gamma give exact zeros; keep going
            if k > 60:
                err = 0.0
                break
            continue
        if mag > last:
            err = last
            break
        tail -= term
        last = mag
        err = mag
    value = main + tail
    # the optimally truncated tail is only good up to the size of an
    # exponential sitting on the sector boundary, exp(-r) r^(1-beta) / alpha
    r = abs(z) ** (1.0 / alpha)
    err = err + math.exp(-r + (1.0 - beta) * math.log(r)) / alpha
    err = err + 8.0 * _EPS * (scale + abs(tail))
    return value, err


def _ext_feasible(alpha, beta, zabs):
    """Digits and term count the multiprecision series needs, and whether that is affordable."""
    if zabs <= 1.0:
        return True, 30, 200
    logz = math.log(zabs)
    top = 16.0
    while True:
        kk = np.linspace(0.0, top, 4097)
        logt = kk * logz - gammaln(alpha * kk + beta)
        if np.argmax(logt) < len(kk) - 10:
            break
        top *= 4
        if top > 1e9:
            return False, 0, 0
    peak_log = float(np.max(logt))
    dps = int(max(30, peak_log / math.log(10) + 35))
    # walk out until the terms are below the working precision
    floor = peak_log - (dps + 5) * math.log(10)
    while logt[-1] > floor:
        top *= 2
        kk = np.linspace(0.0, top, 4097)
        logt = kk * logz - gammaln(alpha * kk + beta)
        if top > 1e9:
            return False, dps, 0
    idx = int(np.argmax((logt < floor) & (kk > kk[np.argmax(logt)])))
    n_terms = int(kk[idx]) + 2
    affordable = n_terms <= _MAX_EXT_TERMS and dps <= _MAX_EXT_DPS and n_terms * dps <= _EXT_BUDGET
    return affordable, dps, n_terms


def _series_extended(alpha, beta, z):
    ok, dps, _ = _ext_feasible(alpha, beta, abs(z))
    if not ok:
        raise PrecisionLoss(
            f"E_{{{alpha},{beta}}}({z}) needs more than {_MAX_EXT_DPS} digits; no regime certifies 1e-10"
        )
    with mpmath.workdps(dps):
        zz = mpmath.mpc(z)
        a = mpmath.mpf(alpha)
        b = mpmath.mpf(beta)
        total = mpmath.mpc(0)
        power = mpmath.mpc(1)
        tol = mpmath.mpf(10) ** (-dps + 5)
        quiet = 0
        for n in range(_MAX_EXT_TERMS):
            term = power * mpmath.rgamma(a * n + b)
            total += term
            if abs(term) <= tol * abs(total):
                quiet += 1
                if quiet >= 2 and n > 2:
                    break
            else:
                quiet = 0
            power *= zz
        else:  # pragma: no cover - guarded by _ext_feasible
            raise NonConvergent(f"extended series for E_{{{alpha},{beta}}}({z}) did not settle")
        value = complex(total)
    return value, abs(value) * 1e-15 + 1e-300


def ml_eval(alpha: float, beta: float, z) -> MLValue | np.ndarray:
    """Evaluate ``E_{alpha,beta}(z)`` with an error estimate.

    Returns an :class:`MLValue` for scalar input, otherwise a structured
    array with fields ``value``, ``error`` and ``regime``.
    """
    MLParams(alpha, beta)
    scalar = np.ndim(z) == 0
    zz = np.atleast_1d(np.asarray(z, dtype=complex)).ravel()
    values = np.empty(zz.shape, dtype=complex)
    errors = np.empty(zz.shape)
    regimes = np.empty(zz.shape, dtype=object)

    radius = R0(alpha)
    absz = np.abs(zz)
    in_series = absz <= radius

    if in_series.any():
        v, e = _series_double(alpha, beta, zz[in_series])
        values[in_series] = v
        errors[in_series] = e
        regimes[in_series] = "series"
    # outside the disc the expansion is tried everywhere; the certification
    # below sends uncertified points to the multiprecision series
    for i in np.flatnonzero(~in_series):
        try:
            values[i], errors[i] = _asymptotic_one(alpha, beta, zz[i])
            regimes[i] = "asymptotic"
        except PrecisionLoss:
            values[i], errors[i], regimes[i] = np.nan, np.inf, "extended"

    for i in range(zz.size):
        good = np.isfinite(values[i]) and errors[i] <= CERTIFY_RTOL * max(abs(values[i]), 1e-300)
        if regimes[i] != "extended" and good:
            continue
        try:
            values[i], errors[i] = _series_extended(alpha, beta, zz[i])
            regimes[i] = "extended"
        except PrecisionLoss:
            # last resort: the asymptotic expansion holds for every argument once |z| is large
            if absz[i] > radius:
                v, e = _asymptotic_one(alpha, beta, zz[i])
                if np.isfinite(v) and e <= CERTIFY_RTOL * max(abs(v), 1e-300):
                    values[i], errors[i], regimes[i] = v, e, "asymptotic"
                    continue
            raise

    if scalar:
        return MLValue(complex(values[0]), float(errors[0]), str(regimes[0]))
    out = np.empty(np.shape(z), dtype=[("value", complex), ("error", float), ("regime", object)])
    out["value"] = values.reshape(np.shape(z))
    out["error"] = errors.reshape(np.shape(z))
    out["regime"] = regimes.reshape(np.shape(z))
    return out


def ml(alpha: float, beta: float, z):
    """``E_{alpha,beta}(z)`` for scalar or array ``z`` (complex result).

    Raises :class:`PrecisionLoss` when no regime certifies a relative
    accuracy of ``1e-10``.

    Examples
    --------
    >>> round(ml(1.0, 1.0, 1.0).real, 7)
    2.7182818
    >>> round(ml(2.0, 1.0, 4.0).real, 7)
    3.7621957
    """
    res = ml_eval(alpha, beta, z)
    if isinstance(res, MLValue):
        return res.value
    return res["value"]


def ml_modulus(alpha: float, beta: float, z):
    """``|E_{alpha,beta}(z)|`` with an absolute error bound.

    Uses :func:`ml_eval` when it certifies.  Otherwise, inside the
    exponential sector, the phase of ``exp(zeta)`` may be lost (``|Im zeta|``
    beyond ``1/eps``) while the modulus is not: the exponential part has
    modulus ``|zeta^(1-beta)| exp(Re zeta) / alpha`` exactly and the algebraic
    tail only shifts it by at most its own size.  Returns ``(modulus, bound)``;
    the bound may exceed the modulus when the tail dominates.
    """
    z = complex(z)
    try:
        v = ml_eval(alpha, beta, z)
        return abs(v.value), v.error
    except PrecisionLoss:
        if abs(np.angle(z)) > alpha * math.pi / 2 + 1e-14 or abs(z) <= R0(alpha):
            raise
    main = 0.0
    for zeta in _branches(alpha, z):
        main += math.exp((1.0 - beta) * math.log(abs(zeta)) + zeta.real) / alpha
    tail = 0.0
    last = math.inf
    for k in range(1, 200):
        mag = abs(z) ** (-k) * abs(float(rgamma(beta - alpha * k)))
        if mag > last:
            break
        tail += mag
        last = mag if mag else last
    return main, tail + 8.0 * _EPS * main


def _is_diagonal(m):
    return np.count_nonzero(m - np.diag(np.diag(m))) == 0


def _matrix_series(alpha, beta, m):
    d = m.shape[0]
    norm = np.linalg.norm(m, 2)
    coef = _series_coefficients(alpha, beta, max(norm, 1e-300))
    if coef is not None:
        total = np.zeros((d, d), dtype=complex)
        power = np.eye(d, dtype=complex)
        biggest = 0.0
        quiet = 0
        for n, c in enumerate(coef):
            term = c * power
            total = total + term
            tn = np.linalg.norm(term)
            biggest = max(biggest, tn)
            if not np.isfinite(tn):
                raise NonConvergent("matrix Mittag-Leffler series overflowed")
            if tn <= 1e-16 * np.linalg.norm(total):
                quiet += 1
                if quiet >= 2 and n > 2:
                    break
            else:
                quiet = 0
            if not power.any():
                break
            power = power @ m
        if 4 * _EPS * biggest <= CERTIFY_RTOL * max(np.linalg.norm(total), 1e-300):
            return total
    # extended precision fallback
    ok, dps, _ = _ext_feasible(alpha, beta, norm)
    if not ok:
        raise PrecisionLoss("matrix Mittag-Leffler series cannot be certified")
    with mpmath.workdps(dps):
        mm = mpmath.matrix(m.tolist())
        total = mpmath.zeros(d, d)
        power = mpmath.eye(d)
        tol = mpmath.mpf(10) ** (-dps + 5)
        quiet = 0
        for n in range(_MAX_EXT_TERMS):
            term = power * mpmath.rgamma(alpha * n + beta)
            total += term
            if mpmath.mnorm(term, 1) <= tol * mpmath.mnorm(total, 1):
                quiet += 1
                if quiet >= 2 and n > 2:
                    break
            else:
                quiet = 0
            power = power * mm
        return np.array(total.tolist(), dtype=complex)


def ml_matrix(alpha: float, beta: float, m) -> np.ndarray:
    """Matrix Mittag-Leffler function ``E_{alpha,beta}(M)``.

    Diagonal matrices are handled entrywise; diagonalizable matrices with a
    well-conditioned eigenbasis go through the eigendecomposition; anything
    else (e.g. nilpotent parts) uses the power series, in extended precision
    when double precision cannot certify it.
    """
    MLParams(alpha, beta)
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise OutOfRange("ml_matrix needs a square matrix")
    if _is_diagonal(m):
        return np.diag(np.atleast_1d(ml(alpha, beta, np.diag(m))))
    w, v = np.linalg.eig(m)
    if np.linalg.cond(v) < 1e6:
        ew = np.atleast_1d(ml(alpha, beta, w))
        return (v * ew) @ np.linalg.inv(v)
    return _matrix_series(alpha, beta, m)
