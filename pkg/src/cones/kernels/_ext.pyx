# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Signatures mirror ``cones.kernels._pure``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


def _im2col(real[:, :, :, ::1] x, real[:, :, ::1] out, int kh, int kw, int stride):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t wo = (w - kw) // stride + 1
    cdef Py_ssize_t hout = (h - kh) // stride + 1
    cdef Py_ssize_t b, ch, i, j, oy, ox, row, col
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    col = 0
                    for oy in range(hout):
                        for ox in range(wo):
                            out[b, row, col] = x[b, ch, oy * stride + i, ox * stride + j]
                            col += 1


def _col2im(real[:, :, ::1] cols, real[:, :, :, ::1] out, int kh, int kw, int stride):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1]
    cdef Py_ssize_t h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t wo = (w - kw) // stride + 1
    cdef Py_ssize_t hout = (h - kh) // stride + 1
    cdef Py_ssize_t b, ch, i, j, oy, ox, row, col
    # Loop order (i, j outermost per channel) matches the numpy fallback.
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    col = 0
                    for oy in range(hout):
                        for ox in range(wo):
                            out[b, ch, oy * stride + i, ox * stride + j] += cols[b, row, col]
                            col += 1


def _pixel_matvec(real[:, :, ::1] w, real[:, ::1] x, real[:, ::1] out):
    cdef Py_ssize_t p, o, i
    cdef Py_ssize_t np_ = w.shape[0], no = w.shape[1], ni = w.shape[2]
    cdef double acc
    for p in range(np_):
        for o in range(no):
            acc = 0.0
            for i in range(ni):
                acc += w[p, o, i] * x[p, i]
            out[p, o] = acc


def _pixel_matvec_t(real[:, :, ::1] w, real[:, ::1] g, real[:, ::1] out):
    cdef Py_ssize_t p, o, i
    cdef Py_ssize_t np_ = w.shape[0], no = w.shape[1], ni = w.shape[2]
    cdef real go
    for p in range(np_):
        for i in range(ni):
            out[p, i] = 0
        for o in range(no):
            go = g[p, o]
            for i in range(ni):
                out[p, i] += w[p, o, i] * go


def _annulus_sum(double[::1] values, long long[::1] bins, double[::1] out):
    cdef Py_ssize_t k, n = values.shape[0], nb = out.shape[0]
    cdef long long b
    for k in range(n):
        b = bins[k]
        if 0 <= b < nb:
            out[b] += values[k]


def im2col(x, int kh, int kw, int stride):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    out = np.empty((n, c * kh * kw, ho * wo), dtype=x.dtype)
    _im2col(x, out, kh, kw, stride)
    return out


def col2im(cols, shape, int kh, int kw, int stride):
    cols = np.ascontiguousarray(cols)
    n, c, h, w = shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    cols = cols.reshape(n, c * kh * kw, ho * wo)
    out = np.zeros(shape, dtype=cols.dtype)
    _col2im(cols, out, kh, kw, stride)
    return out


def pixel_matvec(w, x):
    w = np.ascontiguousarray(w)
    x = np.ascontiguousarray(x, dtype=w.dtype)
    out = np.empty((w.shape[0], w.shape[1]), dtype=w.dtype)
    _pixel_matvec(w, x, out)
    return out


def pixel_matvec_t(w, g):
    w = np.ascontiguousarray(w)
    g = np.ascontiguousarray(g, dtype=w.dtype)
    out = np.empty((w.shape[0], w.shape[2]), dtype=w.dtype)
    _pixel_matvec_t(w, g, out)
    return out


def annulus_sum(values, bins, int nbins):
    v = np.ascontiguousarray(values, dtype=np.float64).ravel()
    b = np.ascontiguousarray(bins, dtype=np.int64).ravel()
    out = np.zeros(nbins, dtype=np.float64)
    _annulus_sum(v, b, out)
    return out
