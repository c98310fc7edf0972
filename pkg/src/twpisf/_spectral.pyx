# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sum-of-exponentials kernel (see twpisf.kernels for the contract)."""

import numpy as np

from libc.math cimport cos, sin

cdef enum:
    CHUNK = 256


def spectral_sum(const double[::1] omega, const double[::1] w_re, const double[::1] w_im,
                 double dt, Py_ssize_t n_times, Py_ssize_t reseed=256):
    cdef Py_ssize_t n = omega.shape[0]
    cdef Py_ssize_t k0, k, m, j, j0, j1
    cdef Py_ssize_t chunk = CHUNK
    cdef double t0, c, s, ar, ai, tr
    cdef double zr[CHUNK]
    cdef double zi[CHUNK]
    cdef double rr[CHUNK]
    cdef double ri[CHUNK]
    out_re = np.zeros(n_times)
    out_im = np.zeros(n_times)
    cdef double[::1] ore = out_re
    cdef double[::1] oim = out_im
    if reseed < 1:
        reseed = 1
    with nogil:
        k0 = 0
        while k0 < n:
            m = chunk if n - k0 > chunk else n - k0
            for k in range(m):
                rr[k] = cos(omega[k0 + k] * dt)
                ri[k] = sin(omega[k0 + k] * dt)
            j0 = 0
            while j0 < n_times:
                j1 = j0 + reseed if j0 + reseed < n_times else n_times
                t0 = j0 * dt
                # exact phases at the start of each block bound the recurrence drift
                for k in range(m):
                    c = cos(omega[k0 + k] * t0)
                    s = sin(omega[k0 + k] * t0)
                    zr[k] = w_re[k0 + k] * c - w_im[k0 + k] * s
                    zi[k] = w_re[k0 + k] * s + w_im[k0 + k] * c
                for j in range(j0, j1):
                    ar = 0.0
                    ai = 0.0
                    for k in range(m):
                        ar = ar + zr[k]
                        ai = ai + zi[k]
                        tr = zr[k] * rr[k] - zi[k] * ri[k]
                        zi[k] = zr[k] * ri[k] + zi[k] * rr[k]
                        zr[k] = tr
                    ore[j] += ar
                    oim[j] += ai
                j0 = j1
            k0 += m
    return out_re + 1j * out_im
