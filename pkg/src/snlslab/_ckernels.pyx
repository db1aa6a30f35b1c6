# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pointwise kernels for the split-step loop.

Arrays must be C-contiguous and flattened; callers pass ``arr.reshape(-1)``.
"""
from libc.math cimport cos, sin, pow, sqrt

import numpy as np

from . import _pykernels


def phase_kick(double complex[::1] u, double coef, double half_power,
               const double[::1] dw=None):
    """In place ``u *= exp(-i*(coef*|u|**(2*half_power) + dw))``."""
    cdef Py_ssize_t i, n = u.shape[0]
    cdef double re, im, r2, phi, c, s
    cdef bint has_noise = dw is not None
    if has_noise and dw.shape[0] != n:
        raise ValueError("dw length does not match u")
    for i in range(n):
        re = u[i].real
        im = u[i].imag
        r2 = re * re + im * im
        if half_power == 1.0:
            phi = coef * r2
        elif half_power == 3.0:
            phi = coef * r2 * r2 * r2
        else:
            phi = coef * pow(r2, half_power)
        if has_noise:
            phi = phi + dw[i]
        c = cos(phi)
        s = sin(phi)
        u[i] = (re * c + im * s) + 1j * (im * c - re * s)


def abs_pow_sum(const double complex[::1] a, double p):
    """Return ``sum(|a|**p)``.

    Even integer ``p`` runs as repeated multiplication. Other exponents go
    to the numpy routine, whose vectorised power beats scalar libm ``pow``.
    """
    cdef Py_ssize_t i, j, n = a.shape[0]
    cdef double acc = 0.0, r2, term
    cdef int k
    if p == 2.0:
        for i in range(n):
            acc += a[i].real * a[i].real + a[i].imag * a[i].imag
        return acc
    if p > 0.0 and p <= 16.0 and p == 2.0 * <int>(0.5 * p):
        k = <int>(0.5 * p)
        for i in range(n):
            r2 = a[i].real * a[i].real + a[i].imag * a[i].imag
            term = r2
            for j in range(k - 1):
                term = term * r2
            acc += term
        return acc
    return _pykernels.abs_pow_sum(np.asarray(a), p)


def abs_max(const double complex[::1] a):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double best = 0.0, r2
    for i in range(n):
        r2 = a[i].real * a[i].real + a[i].imag * a[i].imag
        if r2 > best:
            best = r2
    return sqrt(best)
