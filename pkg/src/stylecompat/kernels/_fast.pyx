# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scoring kernels; drop-in twins of the numpy backend."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def cond_dist_matrix(
    double[:, ::1] xa,
    cnp.intp_t[::1] ca,
    double[:, ::1] xb,
    cnp.intp_t[::1] cb,
    double[:, :, ::1] gates,
):
    """Distance matrix between two item sets; see the numpy backend docstring."""
    cdef Py_ssize_t n = xa.shape[0]
    cdef Py_ssize_t m = xb.shape[0]
    cdef Py_ssize_t d = xa.shape[1]
    cdef Py_ssize_t C = gates.shape[0]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t cai, cbj
    cdef double acc, diff
    for i in range(n):
        cai = ca[i]
        for j in range(m):
            cbj = cb[j]
            acc = 0.0
            for k in range(d):
                diff = xa[i, k] * gates[cai, cbj, k] - xb[j, k] * gates[cbj, cai, k]
                acc += diff * diff
            out[i, j] = sqrt(acc)
    return out_arr


def pair_dists(
    double[:, ::1] xa,
    cnp.intp_t[::1] ca,
    double[:, ::1] xb,
    cnp.intp_t[::1] cb,
    double[:, :, ::1] gates,
):
    """Row-paired distances; see the numpy backend docstring."""
    cdef Py_ssize_t n = xa.shape[0]
    cdef Py_ssize_t d = xa.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef Py_ssize_t cai, cbi
    cdef double acc, diff
    for i in range(n):
        cai = ca[i]
        cbi = cb[i]
        acc = 0.0
        for k in range(d):
            diff = xa[i, k] * gates[cai, cbi, k] - xb[i, k] * gates[cbi, cai, k]
            acc += diff * diff
        out[i] = sqrt(acc)
    return out_arr
