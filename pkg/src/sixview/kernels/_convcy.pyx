# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 2-D convolution kernels (direct form, float64 accumulators).

Every output element is produced by exactly one loop iteration, so the
parallel loops are bit-deterministic regardless of thread count.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()

BACKEND_NAME = "compiled"


def conv2d_forward(cnp.ndarray[cnp.float32_t, ndim=4] x,
                   cnp.ndarray[cnp.float32_t, ndim=4] w,
                   b, int stride, int pad):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef int o = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef int oh = (h + 2 * pad - kh) // stride + 1
    cdef int ow = (wd + 2 * pad - kw) // stride + 1
    cdef cnp.ndarray[cnp.float32_t, ndim=4] out = np.empty((n, o, oh, ow), np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] bias
    cdef bint has_bias = b is not None
    if has_bias:
        bias = np.ascontiguousarray(b, dtype=np.float32)
    else:
        bias = np.zeros(o, np.float32)

    cdef float[:, :, :, ::1] xv = x, wv = w, ov = out
    cdef float[::1] bv = bias
    cdef Py_ssize_t idx, ni, oi, yi, xi, ci, ky, kx, iy, ix
    cdef Py_ssize_t total = n * o * oh
    cdef double acc

    for idx in prange(total, nogil=True, schedule='static'):
        ni = idx // (o * oh)
        oi = (idx // oh) % o
        yi = idx % oh
        for xi in range(ow):
            acc = bv[oi]
            for ci in range(c):
                for ky in range(kh):
                    iy = yi * stride + ky - pad
                    if iy < 0 or iy >= h:
                        continue
                    for kx in range(kw):
                        ix = xi * stride + kx - pad
                        if ix < 0 or ix >= wd:
                            continue
                        acc = acc + xv[ni, ci, iy, ix] * wv[oi, ci, ky, kx]
            ov[ni, oi, yi, xi] = <float>acc
    return out


def conv2d_backward_input(cnp.ndarray[cnp.float32_t, ndim=4] dout,
                          cnp.ndarray[cnp.float32_t, ndim=4] w,
                          int stride, int pad, int h, int wd):
    cdef int n = dout.shape[0], o = dout.shape[1], oh = dout.shape[2], ow = dout.shape[3]
    cdef int c = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef cnp.ndarray[cnp.float32_t, ndim=4] dx = np.empty((n, c, h, wd), np.float32)
    cdef float[:, :, :, ::1] gv = dout, wv = w, dxv = dx
    cdef Py_ssize_t idx, ni, ci, iy, ix, oi, ky, kx, ty, tx, yi, xi
    cdef Py_ssize_t total = n * c * h
    cdef double acc

    # Gather form: each input pixel sums the windows that covered it.
    for idx in prange(total, nogil=True, schedule='static'):
        ni = idx // (c * h)
        ci = (idx // h) % c
        iy = idx % h
        for ix in range(wd):
            acc = 0.0
            for ky in range(kh):
                ty = iy + pad - ky
                if ty < 0 or ty % stride != 0:
                    continue
                yi = ty // stride
                if yi >= oh:
                    continue
                for kx in range(kw):
                    tx = ix + pad - kx
                    if tx < 0 or tx % stride != 0:
                        continue
                    xi = tx // stride
                    if xi >= ow:
                        continue
                    for oi in range(o):
                        acc = acc + gv[ni, oi, yi, xi] * wv[oi, ci, ky, kx]
            dxv[ni, ci, iy, ix] = <float>acc
    return dx


def conv2d_backward_weight(cnp.ndarray[cnp.float32_t, ndim=4] x,
                           cnp.ndarray[cnp.float32_t, ndim=4] dout,
                           int stride, int pad, int kh, int kw):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef int o = dout.shape[1], oh = dout.shape[2], ow = dout.shape[3]
    cdef cnp.ndarray[cnp.float32_t, ndim=4] dw = np.empty((o, c, kh, kw), np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] db = np.empty(o, np.float32)
    cdef float[:, :, :, ::1] xv = x, gv = dout, dwv = dw
    cdef float[::1] dbv = db
    cdef Py_ssize_t idx, oi, ci, ky, kx, ni, yi, xi, iy, ix
    cdef Py_ssize_t total = o * c * kh
    cdef double acc

    for idx in prange(total, nogil=True, schedule='static'):
        oi = idx // (c * kh)
        ci = (idx // kh) % c
        ky = idx % kh
        for kx in range(kw):
            acc = 0.0
            for ni in range(n):
                for yi in range(oh):
                    iy = yi * stride + ky - pad
                    if iy < 0 or iy >= h:
                        continue
                    for xi in range(ow):
                        ix = xi * stride + kx - pad
                        if ix < 0 or ix >= wd:
                            continue
                        acc = acc + xv[ni, ci, iy, ix] * gv[ni, oi, yi, xi]
            dwv[oi, ci, ky, kx] = <float>acc

    for oi in prange(o, nogil=True, schedule='static'):
        acc = 0.0
        for ni in range(n):
            for yi in range(oh):
                for xi in range(ow):
                    acc = acc + gv[ni, oi, yi, xi]
        dbv[oi] = <float>acc
    return dw, db
