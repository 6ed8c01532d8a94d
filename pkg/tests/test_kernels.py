"""Compiled and numpy kernels must agree; Philox against published answers."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sigmahom import _kernels_py, kernels

try:
    from sigmahom import _kernels_ext
except ImportError:  # extension not built
    _kernels_ext = None

BACKENDS = [_kernels_py] + ([_kernels_ext] if _kernels_ext is not None else [])

# Random123 known-answer vectors for Philox4x32-10
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("impl", BACKENDS)
@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(impl, ctr, key, expected):
    out = impl.philox4x32(np.array([ctr], dtype=np.uint32), *key)
    assert tuple(int(v) for v in out[0]) == expected


def test_dispatch_reports_backend():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.skipif(_kernels_ext is None, reason="compiled extension not built")
@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(*[st.integers(0, 2**32 - 1)] * 4), min_size=1, max_size=20),
       st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_philox_backends_bitwise_equal(ctrs, k0, k1):
    c = np.array(ctrs, dtype=np.uint32)
    np.testing.assert_array_equal(_kernels_py.philox4x32(c, k0, k1), _kernels_ext.philox4x32(c, k0, k1))


@pytest.mark.parametrize("impl", BACKENDS)
@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 60), seed=st.integers(0, 10_000))
def test_tridiagonal_solve_matches_dense(impl, n, seed):
    rng = np.random.default_rng(seed)
    lower, upper = rng.uniform(-1, 0, n), rng.uniform(-1, 0, n)
    diag = 2.5 + rng.uniform(0, 1, n)  # diagonally dominant
    rhs = rng.normal(size=n)
    A = np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)
    np.testing.assert_allclose(impl.tridiag_solve(lower, diag, upper, rhs), np.linalg.solve(A, rhs),
                               rtol=1e-10, atol=1e-12)


@pytest.mark.skipif(_kernels_ext is None, reason="compiled extension not built")
@pytest.mark.parametrize("p", [2.0, 3.0, 4.0, 2.5])
def test_power_flux_backends_agree(p, rng):
    coef = rng.uniform(0.5, 2.0, 200)
    lam = rng.normal(scale=3.0, size=200)
    lam[:3] = [0.0, 1e-12, -1e-12]
    a = _kernels_py.power_flux_1d(coef, lam, p, 1e-8)
    b = _kernels_ext.power_flux_1d(coef, lam, p, 1e-8)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-13, atol=1e-300)


def test_power_flux_exact_and_regularized():
    flux, deriv, sec = _kernels_py.power_flux_1d(np.array([2.0]), np.array([-1.5]), 4.0, 1e-8)
    assert flux[0] == pytest.approx(2.0 * 1.5 ** 2 * -1.5, rel=1e-15)
    assert deriv[0] == pytest.approx(2.0 * 3.0 * 1.5 ** 2, rel=1e-12)
    assert sec[0] == pytest.approx(2.0 * 1.5 ** 2, rel=1e-12)
    # degenerate point: Jacobian stays positive thanks to the regularization
    _, deriv0, _ = _kernels_py.power_flux_1d(np.array([1.0]), np.array([0.0]), 4.0, 1e-8)
    assert deriv0[0] > 0.0
