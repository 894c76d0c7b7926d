# cython: language_level=3
"""Compiled inner loops. Signatures mirror :mod:`localtime._kernels_py`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()


def schur_apply(const double complex[:, ::1] rho,
                const Py_ssize_t[::1] level_of,
                const double complex[:, ::1] coeff):
    cdef Py_ssize_t d = rho.shape[0]
    cdef Py_ssize_t i, j, li
    cdef double cr, ci, rr, ri
    out_arr = np.empty((d, d), dtype=np.complex128)
    # explicit real arithmetic avoids the NaN-safe complex multiply helper
    cdef const double[:, ::1] r2 = np.asarray(rho).view(np.float64)
    cdef const double[:, ::1] c2 = np.asarray(coeff).view(np.float64)
    cdef double[:, ::1] o2 = out_arr.view(np.float64)
    for i in range(d):
        li = level_of[i]
        for j in range(d):
            cr = c2[li, 2 * level_of[j]]
            ci = c2[li, 2 * level_of[j] + 1]
            rr = r2[i, 2 * j]
            ri = r2[i, 2 * j + 1]
            o2[i, 2 * j] = cr * rr - ci * ri
            o2[i, 2 * j + 1] = cr * ri + ci * rr
    return out_arr


def phase_sum(const double[::1] times,
              const double[:, ::1] freqs,
              const double[:, ::1] weights):
    cdef Py_ssize_t nt = times.shape[0]
    cdef Py_ssize_t npair = freqs.shape[0]
    cdef Py_ssize_t nk = freqs.shape[1]
    cdef Py_ssize_t a, p, k
    cdef double t, ph, re, im, w
    out_arr = np.empty((nt, npair), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    for a in range(nt):
        t = times[a]
        for p in range(npair):
            re = 0.0
            im = 0.0
            for k in range(nk):
                w = weights[p, k]
                if w == 0.0:
                    continue
                ph = t * freqs[p, k]
                re += w * cos(ph)
                im -= w * sin(ph)
            out[a, p] = re + 1j * im
    return out_arr
