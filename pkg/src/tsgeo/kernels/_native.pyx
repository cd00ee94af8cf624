# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled convolution kernels (hot path of the training loops).

Convolutions are lowered to one BLAS matmul: a C pass packs input
patches into a column matrix (fusing the zero padding), the matmul does
the contraction, and for the input gradient a second C pass scatters
columns back onto the image.  Same contracts as ``pykernels``:
(C,H,W) inputs, (K,C,kh,kw) weights, float64 throughout.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "native"


cdef inline Py_ssize_t _out_dim(Py_ssize_t n, Py_ssize_t k, Py_ssize_t stride,
                                Py_ssize_t pad) nogil:
    return (n + 2 * pad - k) // stride + 1


cdef inline Py_ssize_t _j_lo(Py_ssize_t pad, Py_ssize_t q,
                             Py_ssize_t stride) nogil:
    # smallest j with j*stride - pad + q >= 0
    cdef Py_ssize_t a = pad - q
    if a <= 0:
        return 0
    return (a + stride - 1) // stride


cdef inline Py_ssize_t _j_hi(Py_ssize_t pad, Py_ssize_t q, Py_ssize_t stride,
                             Py_ssize_t n, Py_ssize_t wo) nogil:
    # one past the largest j with j*stride - pad + q <= n - 1
    cdef Py_ssize_t a = n - 1 + pad - q
    if a < 0:
        return 0
    a = a // stride + 1
    return a if a < wo else wo


cdef void _im2col(const double[:, :, ::1] x, double[:, ::1] cols,
                  Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
                  Py_ssize_t pad, Py_ssize_t ho, Py_ssize_t wo) nogil:
    # cols[(c*kh + p)*kw + q, i*wo + j] = x[c, i*s - pad + p, j*s - pad + q]
    # with out-of-range taps as zeros; row order matches a flattened
    # (K, C*kh*kw) weight matrix
    cdef Py_ssize_t c_in = x.shape[0], h = x.shape[1], w_in = x.shape[2]
    cdef Py_ssize_t c, p, q, i, j, ih, row, base, lo, hi
    for c in range(c_in):
        for p in range(kh):
            for q in range(kw):
                row = (c * kh + p) * kw + q
                lo = _j_lo(pad, q, stride)
                hi = _j_hi(pad, q, stride, w_in, wo)
                if hi < lo:
                    hi = lo
                for i in range(ho):
                    base = i * wo
                    ih = i * stride - pad + p
                    if ih < 0 or ih >= h:
                        for j in range(wo):
                            cols[row, base + j] = 0.0
                        continue
                    for j in range(lo):
                        cols[row, base + j] = 0.0
                    for j in range(lo, hi):
                        cols[row, base + j] = x[c, ih, j * stride - pad + q]
                    for j in range(hi, wo):
                        cols[row, base + j] = 0.0


cdef void _col2im_add(const double[:, ::1] cols, double[:, :, ::1] gx,
                      Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
                      Py_ssize_t pad, Py_ssize_t ho, Py_ssize_t wo) nogil:
    cdef Py_ssize_t c_in = gx.shape[0], h = gx.shape[1], w_in = gx.shape[2]
    cdef Py_ssize_t c, p, q, i, j, ih, row, base, lo, hi
    for c in range(c_in):
        for p in range(kh):
            for q in range(kw):
                row = (c * kh + p) * kw + q
                lo = _j_lo(pad, q, stride)
                hi = _j_hi(pad, q, stride, w_in, wo)
                if hi < lo:
                    hi = lo
                for i in range(ho):
                    ih = i * stride - pad + p
                    if ih < 0 or ih >= h:
                        continue
                    base = i * wo
                    for j in range(lo, hi):
                        gx[c, ih, j * stride - pad + q] += cols[row, base + j]


def conv2d_forward(x, w, stride, pad):
    """Cross-correlation of (C,H,W) input with (K,C,kh,kw) weights."""
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t s = stride, p0 = pad
    cdef Py_ssize_t c_in = xv.shape[0], h = xv.shape[1], w_in = xv.shape[2]
    cdef Py_ssize_t k = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = _out_dim(h, kh, s, p0), wo = _out_dim(w_in, kw, s, p0)
    cols = np.empty((c_in * kh * kw, ho * wo), dtype=np.float64)
    cdef double[:, ::1] cv = cols
    with nogil:
        _im2col(xv, cv, kh, kw, s, p0, ho, wo)
    y = np.dot(w.reshape(k, c_in * kh * kw), cols)
    return y.reshape(k, ho, wo)


def conv2d_input_grad(gy, w, stride, pad, h, w_in):
    """Gradient of conv2d_forward w.r.t. its input."""
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t s = stride, p0 = pad, hh = h, ww = w_in
    cdef Py_ssize_t k = w.shape[0], c_in = w.shape[1]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = gy.shape[1], wo = gy.shape[2]
    cols = np.dot(w.reshape(k, c_in * kh * kw).T, gy.reshape(k, ho * wo))
    cdef double[:, ::1] cv = cols
    gx = np.zeros((c_in, hh, ww), dtype=np.float64)
    cdef double[:, :, ::1] gxv = gx
    with nogil:
        _col2im_add(cv, gxv, kh, kw, s, p0, ho, wo)
    return gx


def conv2d_weight_grad(x, gy, stride, pad, kh, kw):
    """Gradient of conv2d_forward w.r.t. the weights."""
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t s = stride, p0 = pad, kkh = kh, kkw = kw
    cdef Py_ssize_t c_in = xv.shape[0]
    cdef Py_ssize_t k = gy.shape[0], ho = gy.shape[1], wo = gy.shape[2]
    cols = np.empty((c_in * kkh * kkw, ho * wo), dtype=np.float64)
    cdef double[:, ::1] cv = cols
    with nogil:
        _im2col(xv, cv, kkh, kkw, s, p0, ho, wo)
    gw = np.dot(gy.reshape(k, ho * wo), cols.T)
    return gw.reshape(k, c_in, kkh, kkw)
