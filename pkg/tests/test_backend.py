import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.special

from resolvent_kit import _accel

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
RNG = np.random.default_rng(7)


def _crandn(*shape):
    return RNG.standard_normal(shape) + 1j * RNG.standard_normal(shape)


@needs_numba
def test_ml_series_backends_agree():
    z = np.array([0.3, -2.0 + 1.0j, 4.0, -7.5j])
    coef = np.exp(-scipy.special.gammaln(0.5 * np.arange(400) + 1))
    ref, big_ref, used_ref = _accel._ml_series_numpy(z, coef)
    out = np.empty_like(z)
    big = np.empty(z.shape)
    used = np.empty(z.shape, dtype=np.int64)
    _accel._ml_series_jit(z, coef, 1e-15, out, big, used)
    np.testing.assert_allclose(out, ref, rtol=1e-13)
    np.testing.assert_allclose(big, big_ref, rtol=1e-13)
    np.testing.assert_array_equal(used, used_ref)


@needs_numba
@pytest.mark.parametrize("n_mu,n_nu,n_e", [(1, 1, 1), (2, 3, 4)])
def test_hankel_backends_agree(n_mu, n_nu, n_e):
    n_a, n_out, offset = 9, 7, 8
    table = _crandn(offset + n_out + 1, n_mu, n_nu)
    xw = _crandn(n_a, n_mu, n_e)
    ref = _accel._hankel_numpy(table, xw, offset, n_out)
    out = np.zeros_like(ref)
    _accel._hankel_jit(table, xw, offset, n_out, out)
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


@needs_numba
@pytest.mark.parametrize("first", [0, 3])
def test_toeplitz_backends_agree(first):
    n_out, n_b = 10, 8
    g = _crandn(n_out, 2, 2, 3)
    yw = _crandn(n_b, 2, 3, 2)
    ref = _accel._toeplitz_numpy(g, yw, first, n_out)
    out = np.zeros_like(ref)
    _accel._toeplitz_jit(g, yw, first, n_out, out)
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_toeplitz_numpy_against_direct_sum():
    g = _crandn(6, 1, 2, 2)
    yw = _crandn(5, 1, 2, 1)
    out = _accel._toeplitz_numpy(g, yw, 1, 6)
    for m in range(1, 7):
        direct = sum((g[m - b - 1, 0] @ yw[b, 0] for b in range(1, min(m, 5))), np.zeros((2, 1)))
        np.testing.assert_allclose(out[m - 1], direct, atol=1e-12)


@pytest.mark.parametrize("value,expect", [("0", False), ("off", False), ("1", True), ("", True)])
def test_env_flag_parsing(monkeypatch, value, expect):
    monkeypatch.setenv("RESOLVENT_KIT_NUMBA", value)
    assert _accel.numba_requested() is expect


def test_numpy_backend_end_to_end():
    code = (
        "from resolvent_kit import _accel; from resolvent_kit.special import ml; "
        "print(_accel.backend(), repr(complex(ml(0.5, 1.0, -1.5))))"
    )
    env = dict(os.environ, RESOLVENT_KIT_NUMBA="0")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    name, value = res.stdout.split()
    assert name == "numpy"
    from resolvent_kit.special import ml

    assert complex(value) == pytest.approx(complex(ml(0.5, 1.0, -1.5)), rel=1e-13)
