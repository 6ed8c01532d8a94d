"""Numpy implementations of the hot kernels.

Used when the compiled extension is unavailable. The test suite checks both
backends agree bit-for-bit (philox) or to rounding (the float kernels).
"""

import numpy as np
from scipy.linalg import solve_banded

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = 0x9E3779B9
PHILOX_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def philox4x32(counters, key0, key1, rounds=10):
    """Philox4x32 block cipher applied row-wise to ``counters`` (shape (n, 4))."""
    ctr = np.asarray(counters, dtype=np.uint32).reshape(-1, 4)
    c0 = ctr[:, 0].astype(np.uint64)
    c1 = ctr[:, 1].astype(np.uint64)
    c2 = ctr[:, 2].astype(np.uint64)
    c3 = ctr[:, 3].astype(np.uint64)
    k0 = int(key0) & 0xFFFFFFFF
    k1 = int(key1) & 0xFFFFFFFF
    for r in range(rounds):
        if r > 0:
            k0 = (k0 + PHILOX_W0) & 0xFFFFFFFF
            k1 = (k1 + PHILOX_W1) & 0xFFFFFFFF
        p0 = c0 * PHILOX_M0
        p1 = c2 * PHILOX_M1
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0 = hi1 ^ c1 ^ np.uint64(k0)
        c1 = lo1
        c2 = hi0 ^ c3 ^ np.uint64(k1)
        c3 = lo0
    return np.stack([c0, c1, c2, c3], axis=1).astype(np.uint32)


def tridiag_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs)


def power_flux_1d(coef, lam, p, delta):
    """Scalar power-law flux ``coef*|lam|^(p-2)*lam`` with its derivative and secant.

    The derivative and secant carry the ``lam**2 + delta**2`` regularization;
    the flux itself is exact.
    """
    coef = np.asarray(coef, dtype=float)
    lam = np.asarray(lam, dtype=float)
    a = np.abs(lam)
    if p == 2.0:
        flux = coef * lam
        secant = coef * np.ones_like(lam)
        return flux, secant.copy(), secant
    flux = coef * a ** (p - 2.0) * lam
    reg = (lam * lam + delta * delta) ** (0.5 * (p - 2.0))
    return flux, coef * (p - 1.0) * reg, coef * reg
