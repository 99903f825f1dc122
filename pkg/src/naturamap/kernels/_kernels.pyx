# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the conv hot path.

Contracts and accumulation order mirror numpy_backend exactly; the two
backends are interchangeable bit-for-bit.
"""
from libc.string cimport memcpy, memset

import numpy as np

cimport numpy as cnp

NAME = "cython"

ctypedef fused real:
    float
    double


def im2col3x3(real[:, :, ::1] x, real[:, ::1] cols):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t ci, k, ki, kj, i, si, row
    cdef Py_ssize_t jlo, jhi
    cdef real* dst
    cdef const real* src
    for ci in range(c):
        for k in range(9):
            ki = k / 3
            kj = k % 3
            row = ci * 9 + k
            # source row index for output row i is i + ki - 1
            for i in range(h):
                dst = &cols[row, i * w]
                si = i + ki - 1
                if si < 0 or si >= h:
                    memset(dst, 0, w * sizeof(real))
                    continue
                # valid output columns j satisfy 0 <= j + kj - 1 < w
                jlo = 0 if kj >= 1 else 1
                jhi = w if kj <= 1 else w - 1
                if jlo > 0:
                    dst[0] = 0.0
                if jhi < w:
                    dst[w - 1] = 0.0
                src = &x[ci, si, jlo + kj - 1]
                memcpy(dst + jlo, src, (jhi - jlo) * sizeof(real))


def col2im3x3(real[:, ::1] dcols, real[:, :, ::1] dx):
    cdef Py_ssize_t c = dx.shape[0], h = dx.shape[1], w = dx.shape[2]
    cdef Py_ssize_t ci, k, ki, kj, i, si, j, jlo, jhi, row
    cdef const real* src
    cdef real* dst
    memset(&dx[0, 0, 0], 0, c * h * w * sizeof(real))
    for ci in range(c):
        for k in range(9):
            ki = k / 3
            kj = k % 3
            row = ci * 9 + k
            for i in range(h):
                si = i + ki - 1
                if si < 0 or si >= h:
                    continue
                jlo = 0 if kj >= 1 else 1
                jhi = w if kj <= 1 else w - 1
                src = &dcols[row, i * w]
                dst = &dx[ci, si, kj - 1]
                for j in range(jlo, jhi):
                    dst[j] += src[j]


def maxpool2x2(real[:, :, ::1] x):
    cdef Py_ssize_t c = x.shape[0], h2 = x.shape[1] // 2, w2 = x.shape[2] // 2
    if real is float:
        y_arr = np.empty((c, h2, w2), dtype=np.float32)
    else:
        y_arr = np.empty((c, h2, w2), dtype=np.float64)
    idx_arr = np.empty((c, h2, w2), dtype=np.uint8)
    cdef real[:, :, ::1] y = y_arr
    cdef unsigned char[:, :, ::1] idx = idx_arr
    cdef Py_ssize_t ci, i, j
    cdef real v0, v1, v2, v3, best
    cdef unsigned char which
    for ci in range(c):
        for i in range(h2):
            for j in range(w2):
                v0 = x[ci, 2 * i, 2 * j]
                v1 = x[ci, 2 * i, 2 * j + 1]
                v2 = x[ci, 2 * i + 1, 2 * j]
                v3 = x[ci, 2 * i + 1, 2 * j + 1]
                best = v0
                which = 0
                if v1 > best:
                    best = v1
                    which = 1
                if v2 > best:
                    best = v2
                    which = 2
                if v3 > best:
                    best = v3
                    which = 3
                y[ci, i, j] = best
                idx[ci, i, j] = which
    return y_arr, idx_arr


def maxpool2x2_backward(real[:, :, ::1] dy, unsigned char[:, :, ::1] idx,
                        real[:, :, ::1] dx):
    cdef Py_ssize_t c = dx.shape[0], h2 = dy.shape[1], w2 = dy.shape[2]
    cdef Py_ssize_t ci, i, j
    cdef unsigned char which
    memset(&dx[0, 0, 0], 0, c * dx.shape[1] * dx.shape[2] * sizeof(real))
    for ci in range(c):
        for i in range(h2):
            for j in range(w2):
                which = idx[ci, i, j]
                dx[ci, 2 * i + which / 2, 2 * j + which % 2] = dy[ci, i, j]
