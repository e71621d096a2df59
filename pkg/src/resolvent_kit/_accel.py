"""Backend switch for the hot loops.

The numba versions are used when numba imports and ``RESOLVENT_KIT_NUMBA``
is not set to ``0``.  Both backends compute the same sums; they differ only
in summation order, so results agree to rounding.
"""

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly when numba is present
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def numba_requested() -> bool:
    return os.environ.get("RESOLVENT_KIT_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


USE_NUMBA = HAVE_NUMBA and numba_requested()


def backend() -> str:
    """Name of the active backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"


def njit(func):
    """``numba.njit(cache=True)`` when numba is available, identity otherwise."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


# ---------------------------------------------------------------------------
# Mittag-Leffler power series


def _ml_series_numpy(z, coef, tol=1e-15, max_terms=100000):
    """Sum ``sum_n z**n * coef[n]`` until the term-ratio test passes.

    Returns the partial sums, the largest term modulus seen (for a round-off
    estimate) and the number of terms used per entry.
    """
    z = np.asarray(z, dtype=complex)
    total = np.zeros_like(z)
    power = np.ones_like(z)
    biggest = np.zeros(z.shape)
    used = np.zeros(z.shape, dtype=np.int64)
    active = np.ones(z.shape, dtype=bool)
    quiet = np.zeros(z.shape, dtype=np.int64)
    n_max = min(len(coef), max_terms)
    for n in range(n_max):
        term = power * coef[n]
        mag = np.abs(term)
        total = np.where(active, total + term, total)
        biggest = np.where(active, np.maximum(biggest, mag), biggest)
        used = np.where(active, n + 1, used)
        small = mag <= tol * np.abs(total)
        quiet = np.where(small, quiet + 1, 0)
        # two consecutive negligible terms past the peak end the sum
        active &= ~((quiet >= 2) & (n > 2))
        if not active.any():
            break
        power = power * z
    return total, biggest, used


def _ml_series_loop(z, coef, tol, out, biggest, used):
    n_max = coef.shape[0]
    for i in range(z.shape[0]):
        zi = z[i]
        total = 0j
        power = 1.0 + 0j
        big = 0.0
        quiet = 0
        k = 0
        for n in range(n_max):
            term = power * coef[n]
            total += term
            mag = abs(term)
            if mag > big:
                big = mag
            k = n + 1
            if mag <= tol * abs(total):
                quiet += 1
            else:
                quiet = 0
            if quiet >= 2 and n > 2:
                break
            power *= zi
        out[i] = total
        biggest[i] = big
        used[i] = k


_ml_series_jit = njit(_ml_series_loop)


def ml_series(z, coef, tol=1e-15):
    """Power series sum with per-entry stopping; dispatches on the backend."""
    z = np.asarray(z, dtype=complex)
    coef = np.ascontiguousarray(coef, dtype=float)
    if not USE_NUMBA:
        return _ml_series_numpy(z, coef, tol)
    flat = np.ascontiguousarray(z.ravel())
    out = np.empty(flat.shape, dtype=complex)
    biggest = np.empty(flat.shape)
    used = np.empty(flat.shape, dtype=np.int64)
    _ml_series_jit(flat, coef, tol, out, biggest, used)
    return out.reshape(z.shape), biggest.reshape(z.shape), used.reshape(z.shape)


# ---------------------------------------------------------------------------
# Structured sums used by the convolution engines.
#
# Operand arrays carry a trailing flattened matrix axis ``e`` (d*d entries, or
# 1 for scalars).  Weights are scalar.


def _hankel_numpy(table, xw, offset, n_out):
    # G[u, nu, e] = sum_{a, mu} table[offset + u - a, mu, nu] * xw[a, mu, e]
    n_a, n_mu, n_e = xw.shape
    n_nu = table.shape[2]
    u = np.arange(1, n_out + 1)[:, None]
    a = np.arange(n_a)[None, :]
    idx = offset + u - a
    out = np.zeros((n_out, n_nu, n_e), dtype=complex)
    for mu in range(n_mu):
        block = table[idx, mu, :]  # (n_out, n_a, n_nu)
        out += np.einsum("uan,ae->une", block, xw[:, mu, :])
    return out


def _hankel_loop(table, xw, offset, n_out, out):
    n_a, n_mu, n_e = xw.shape
    n_nu = table.shape[2]
    for u in range(1, n_out + 1):
        for a in range(n_a):
            d = offset + u - a
            for mu in range(n_mu):
                for nu in range(n_nu):
                    w = table[d, mu, nu]
                    if w == 0:
                        continue
                    for e in range(n_e):
                        out[u - 1, nu, e] += w * xw[a, mu, e]


_hankel_jit = njit(_hankel_loop)


def hankel_contract(table, xw, offset, n_out):
    """``G[u] = sum_a table[offset + u - a] . xw[a]`` for ``u = 1..n_out``.

    ``table`` has shape (n_d, n_mu, n_nu) and ``xw`` has shape (n_a, n_mu, n_e).
    The caller guarantees that every index ``offset + u - a`` is in range.
    """
    table = np.ascontiguousarray(table, dtype=complex)
    xw = np.ascontiguousarray(xw, dtype=complex)
    if not USE_NUMBA:
        return _hankel_numpy(table, xw, offset, n_out)
    out = np.zeros((n_out, table.shape[2], xw.shape[2]), dtype=complex)
    _hankel_jit(table, xw, offset, n_out, out)
    return out


def _toeplitz_numpy(g, yw, first, n_out):
    # I[m] = sum_{b=first}^{m-1} sum_nu g[m-b-1, nu] @ yw[b, nu]
    # g: (n_u, n_nu, p, q); yw: (n_b, n_nu, q, r)
    n_b = yw.shape[0]
    p, r = g.shape[2], yw.shape[3]
    out = np.zeros((n_out, p, r), dtype=complex)
    m = np.arange(1, n_out + 1)[:, None]
    b = np.arange(n_b)[None, :]
    lag = m - b - 1
    valid = (b >= first) & (lag >= 0)
    lag_c = np.where(valid, lag, 0)
    for nu in range(g.shape[1]):
        block = g[lag_c, nu]  # (n_out, n_b, p, q)
        block = block * valid[:, :, None, None]
        out += np.einsum("mbpq,bqr->mpr", block, yw[:, nu])
    return out


def _toeplitz_loop(g, yw, first, n_out, out):
    n_b = yw.shape[0]
    n_nu = g.shape[1]
    p, q = g.shape[2], g.shape[3]
    r = yw.shape[3]
    for m in range(1, n_out + 1):
        for b in range(first, min(m, n_b)):
            lag = m - b - 1
            for nu in range(n_nu):
                for i in range(p):
                    for k in range(r):
                        acc = 0j
                        for j in range(q):
                            acc += g[lag, nu, i, j] * yw[b, nu, j, k]
                        out[m - 1, i, k] += acc


_toeplitz_jit = njit(_toeplitz_loop)


def toeplitz_apply(g, yw, first, n_out):
    """``I[m] = sum_{b=first}^{m-1} sum_nu g[m-b-1, nu] @ yw[b, nu]``.

    Matrix products are taken with ``g`` on the left.  Shapes: ``g`` is
    (n_u, n_nu, p, q), ``yw`` is (n_b, n_nu, q, r).
    """
    g = np.ascontiguousarray(g, dtype=complex)
    yw = np.ascontiguousarray(yw, dtype=complex)
    if not USE_NUMBA:
        return _toeplitz_numpy(g, yw, first, n_out)
    out = np.zeros((n_out, g.shape[2], yw.shape[3]), dtype=complex)
    _toeplitz_jit(g, yw, first, n_out, out)
    return out
