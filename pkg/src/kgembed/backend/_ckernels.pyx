# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Same contract as kgembed.backend._pykernels; the direct loops here are the
normative summations written out one index at a time.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def ccorr_rows(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, ::1] av = a
    cdef double[:, ::1] bv = b
    cdef Py_ssize_t rows = av.shape[0], d = av.shape[1]
    out = np.zeros((rows, d))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, k, j
    cdef double acc
    for i in range(rows):
        for k in range(d):
            acc = 0.0
            for j in range(d):
                acc += av[i, j] * bv[i, (k + j) % d]
            ov[i, k] = acc
    return out


def cconv_rows(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, ::1] av = a
    cdef double[:, ::1] bv = b
    cdef Py_ssize_t rows = av.shape[0], d = av.shape[1]
    out = np.zeros((rows, d))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, k, j
    cdef double acc
    for i in range(rows):
        for k in range(d):
            acc = 0.0
            for j in range(d):
                acc += av[i, j] * bv[i, (k - j + d) % d]
            ov[i, k] = acc
    return out


def cconv2d_forward(planes, filters):
    planes = np.ascontiguousarray(planes, dtype=np.float64)
    filters = np.ascontiguousarray(filters, dtype=np.float64)
    cdef double[:, :, ::1] pv = planes
    cdef double[:, :, ::1] wv = filters
    cdef Py_ssize_t p = pv.shape[0], m = pv.shape[1], n = pv.shape[2]
    cdef Py_ssize_t f = wv.shape[0], k = wv.shape[1]
    cdef Py_ssize_t h = k // 2
    out = np.zeros((p, f, m, n))
    cdef double[:, :, :, ::1] ov = out
    cdef Py_ssize_t ip, jf, r, c, i, j
    cdef double acc
    for ip in range(p):
        for jf in range(f):
            for r in range(m):
                for c in range(n):
                    acc = 0.0
                    for i in range(-h, h + 1):
                        for j in range(-h, h + 1):
                            acc += pv[ip, (r - i + m) % m, (c - j + n) % n] * wv[jf, i + h, j + h]
                    ov[ip, jf, r, c] = acc
    return out


def cconv2d_backward_input(dout, filters):
    dout = np.ascontiguousarray(dout, dtype=np.float64)
    filters = np.ascontiguousarray(filters, dtype=np.float64)
    cdef double[:, :, :, ::1] dv = dout
    cdef double[:, :, ::1] wv = filters
    cdef Py_ssize_t p = dv.shape[0], f = dv.shape[1], m = dv.shape[2], n = dv.shape[3]
    cdef Py_ssize_t k = wv.shape[1]
    cdef Py_ssize_t h = k // 2
    dplanes = np.zeros((p, m, n))
    cdef double[:, :, ::1] gv = dplanes
    cdef Py_ssize_t ip, jf, u, v, i, j
    cdef double acc
    for ip in range(p):
        for u in range(m):
            for v in range(n):
                acc = 0.0
                for jf in range(f):
                    for i in range(-h, h + 1):
                        for j in range(-h, h + 1):
                            acc += dv[ip, jf, (u + i + m) % m, (v + j + n) % n] * wv[jf, i + h, j + h]
                gv[ip, u, v] = acc
    return dplanes


def cconv2d_backward_filters(dout, planes, k):
    dout = np.ascontiguousarray(dout, dtype=np.float64)
    planes = np.ascontiguousarray(planes, dtype=np.float64)
    cdef double[:, :, :, ::1] dv = dout
    cdef double[:, :, ::1] pv = planes
    cdef Py_ssize_t p = dv.shape[0], f = dv.shape[1], m = dv.shape[2], n = dv.shape[3]
    cdef Py_ssize_t kk = k
    cdef Py_ssize_t h = kk // 2
    dfilters = np.zeros((f, kk, kk))
    cdef double[:, :, ::1] gv = dfilters
    cdef Py_ssize_t ip, jf, r, c, i, j
    cdef double acc
    for jf in range(f):
        for i in range(-h, h + 1):
            for j in range(-h, h + 1):
                acc = 0.0
                for ip in range(p):
                    for r in range(m):
                        for c in range(n):
                            acc += dv[ip, jf, r, c] * pv[ip, (r - i + m) % m, (c - j + n) % n]
                gv[jf, i + h, j + h] = acc
    return dfilters


def window_pair_counts(tags, k, wrap):
    tags = np.ascontiguousarray(tags, dtype=np.int8)
    cdef signed char[:, ::1] tv = tags
    cdef Py_ssize_t m = tv.shape[0], n = tv.shape[1]
    cdef Py_ssize_t kk = k
    if kk > min(m, n):
        raise ValueError(f"window size {k} exceeds layout extents {m}x{n}")
    cdef Py_ssize_t rmax = m if wrap else m - kk + 1
    cdef Py_ssize_t cmax = n if wrap else n - kk + 1
    cdef long long het = 0, homo = 0
    cdef Py_ssize_t r, c, i, j, x, y
    cdef signed char t
    for r in range(rmax):
        for c in range(cmax):
            x = 0
            y = 0
            for i in range(kk):
                for j in range(kk):
                    t = tv[(r + i) % m, (c + j) % n]
                    if t == 1:
                        x += 1
                    elif t == 2:
                        y += 1
            het += 2 * x * y
            homo += x * (x - 1) + y * (y - 1)
    return int(het), int(homo), int(rmax * cmax)
