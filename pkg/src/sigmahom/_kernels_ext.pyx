# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt
from libc.stdint cimport uint32_t, uint64_t

cnp.import_array()

cdef uint64_t M0 = 0xD2511F53
cdef uint64_t M1 = 0xCD9E8D57
cdef uint32_t W0 = 0x9E3779B9
cdef uint32_t W1 = 0xBB67AE85


def philox4x32(counters, key0, key1, int rounds=10):
    cdef cnp.ndarray[cnp.uint32_t, ndim=2] ctr = np.array(
        np.asarray(counters, dtype=np.uint32).reshape(-1, 4), order="C", copy=True)
    cdef Py_ssize_t n = ctr.shape[0]
    cdef cnp.ndarray[cnp.uint32_t, ndim=2] out = np.empty((n, 4), dtype=np.uint32)
    cdef uint32_t k0, k1, c0, c1, c2, c3
    cdef uint32_t ik0 = <uint32_t>(int(key0) & 0xFFFFFFFF)
    cdef uint32_t ik1 = <uint32_t>(int(key1) & 0xFFFFFFFF)
    cdef uint64_t p0, p1
    cdef Py_ssize_t i
    cdef int r
    for i in range(n):
        c0 = ctr[i, 0]
        c1 = ctr[i, 1]
        c2 = ctr[i, 2]
        c3 = ctr[i, 3]
        k0 = ik0
        k1 = ik1
        for r in range(rounds):
            if r > 0:
                k0 = k0 + W0
                k1 = k1 + W1
            p0 = <uint64_t>c0 * M0
            p1 = <uint64_t>c2 * M1
            c0 = <uint32_t>(p1 >> 32) ^ c1 ^ k0
            c1 = <uint32_t>p1
            c2 = <uint32_t>(p0 >> 32) ^ c3 ^ k1
            c3 = <uint32_t>p0
        out[i, 0] = c0
        out[i, 1] = c1
        out[i, 2] = c2
        out[i, 3] = c3
    return out


def tridiag_solve(lower, diag, upper, rhs):
    cdef const double[::1] a = np.ascontiguousarray(lower, dtype=float)
    cdef const double[::1] b = np.ascontiguousarray(diag, dtype=float)
    cdef const double[::1] c = np.ascontiguousarray(upper, dtype=float)
    cdef const double[::1] d = np.ascontiguousarray(rhs, dtype=float)
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t i
    cdef double m
    cp_arr = np.empty(n)
    dp_arr = np.empty(n)
    x_arr = np.empty(n)
    cdef double[::1] cp = cp_arr
    cdef double[::1] dp = dp_arr
    cdef double[::1] x = x_arr
    cp[0] = c[0] / b[0] if n > 1 else 0.0
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        m = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / m if i < n - 1 else 0.0
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x_arr


def power_flux_1d(coef, lam, double p, double delta):
    cdef const double[::1] l = np.ascontiguousarray(lam, dtype=np.float64)
    cdef Py_ssize_t n = l.shape[0]
    cdef const double[::1] g
    cdef double g0 = 0.0
    cdef bint scalar = np.ndim(coef) == 0
    if scalar:
        g0 = float(coef)
        g = l  # placeholder, never read
    else:
        g = np.ascontiguousarray(np.broadcast_to(coef, (n,)), dtype=np.float64)
    flux_arr = np.empty(n)
    deriv_arr = np.empty(n)
    sec_arr = np.empty(n)
    cdef double[::1] flux = flux_arr
    cdef double[::1] deriv = deriv_arr
    cdef double[::1] sec = sec_arr
    cdef double e = p - 2.0
    cdef double d2 = delta * delta
    cdef double reg, gi, li, a
    cdef Py_ssize_t i
    # integer exponents avoid pow(); p = 3 and p = 4 are the common non-linear cases
    cdef int mode = 0 if e == 0.0 else (1 if e == 1.0 else (2 if e == 2.0 else 3))
    with nogil:
        for i in range(n):
            gi = g0 if scalar else g[i]
            li = l[i]
            if mode == 0:
                flux[i] = gi * li
                deriv[i] = gi
                sec[i] = gi
                continue
            a = fabs(li)
            if mode == 1:
                flux[i] = gi * a * li
                reg = sqrt(li * li + d2)
            elif mode == 2:
                flux[i] = gi * (a * a) * li
                reg = li * li + d2
            else:
                flux[i] = gi * pow(a, e) * li
                reg = pow(li * li + d2, 0.5 * e)
            deriv[i] = gi * (p - 1.0) * reg
            sec[i] = gi * reg
    return flux_arr, deriv_arr, sec_arr
