# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batched symmetric-function kernels.

Same contract as ``hessquot._kernels_py``; rows are processed with plain C
loops so no temporaries are allocated per row.
"""

import numpy as np
from libc.math cimport pow


cdef inline void _expand(const double[::1] lam, Py_ssize_t skip_a,
                         Py_ssize_t skip_b, double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = lam.shape[0]
    cdef Py_ssize_t i, k, used = 0
    cdef double x
    out[0] = 1.0
    for k in range(1, n + 1):
        out[k] = 0.0
    for i in range(n):
        if i == skip_a or i == skip_b:
            continue
        x = lam[i]
        used += 1
        for k in range(used, 0, -1):
            out[k] += x * out[k - 1]


def esym(lam):
    cdef double[:, ::1] lv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef Py_ssize_t m = lv.shape[0], n = lv.shape[1], r
    res = np.empty((m, n + 1))
    cdef double[:, ::1] ov = res
    with nogil:
        for r in range(m):
            _expand(lv[r], -1, -1, ov[r])
    return res


def esym_deleted(lam):
    cdef double[:, ::1] lv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef Py_ssize_t m = lv.shape[0], n = lv.shape[1], r, i
    res = np.empty((m, n, n + 1))
    cdef double[:, :, ::1] ov = res
    with nogil:
        for r in range(m):
            for i in range(n):
                _expand(lv[r], i, -1, ov[r, i])
    return res


def esym_deleted2(lam):
    cdef double[:, ::1] lv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef Py_ssize_t m = lv.shape[0], n = lv.shape[1], r, i, j, k
    res = np.empty((m, n, n, n + 1))
    cdef double[:, :, :, ::1] ov = res
    with nogil:
        for r in range(m):
            for i in range(n):
                for j in range(i, n):
                    _expand(lv[r], i, j, ov[r, i, j])
                    if j != i:
                        for k in range(n + 1):
                            ov[r, j, i, k] = ov[r, i, j, k]
    return res


def quotient_grad(lam, int alpha):
    cdef double[:, ::1] lv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef Py_ssize_t m = lv.shape[0], n = lv.shape[1], r, i
    f_arr = np.empty(m)
    df_arr = np.empty((m, n))
    work_arr = np.empty(n + 1)
    sub_arr = np.empty(n + 1)
    cdef double[::1] fv = f_arr, work = work_arr, sub = sub_arr
    cdef double[:, ::1] dfv = df_arr
    cdef double top, bot, f, g
    cdef Py_ssize_t lo = n - alpha
    with nogil:
        for r in range(m):
            _expand(lv[r], -1, -1, work)
            top = work[n]
            bot = work[lo]
            f = pow(top / bot, 1.0 / alpha)
            fv[r] = f
            for i in range(n):
                _expand(lv[r], i, -1, sub)
                g = sub[n - 1] / top
                if lo - 1 >= 0:
                    g = g - sub[lo - 1] / bot
                dfv[r, i] = f / alpha * g
    return f_arr, df_arr
