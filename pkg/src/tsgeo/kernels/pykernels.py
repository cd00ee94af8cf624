"""Numpy implementations of the convolution kernels.

These are the fallback for the compiled extension in ``_native.pyx``.
Layouts: inputs are (C, H, W), weights are (K, C, kh, kw), all float64.
The forward pass uses im2col + one BLAS matmul; the gradients reuse the
same access pattern with a short loop over kernel taps.
"""

import numpy as np

BACKEND = "numpy"


def _out_dim(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def _pad2d(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad)))


def _im2col(xp, kh, kw, stride, ho, wo):
    # (C, ho, wo, kh, kw) view, then flattened to (C*kh*kw, ho*wo)
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    c = xp.shape[0]
    cols = win.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols)


def conv2d_forward(x, w, stride, pad):
    """Cross-correlation of (C,H,W) input with (K,C,kh,kw) weights."""
    k, c, kh, kw = w.shape
    ho = _out_dim(x.shape[1], kh, stride, pad)
    wo = _out_dim(x.shape[2], kw, stride, pad)
    cols = _im2col(_pad2d(x, pad), kh, kw, stride, ho, wo)
    y = w.reshape(k, c * kh * kw) @ cols
    return y.reshape(k, ho, wo)


def conv2d_input_grad(gy, w, stride, pad, h, w_in):
    """Gradient of conv2d_forward w.r.t. its input (a scatter over taps)."""
    k, c, kh, kw = w.shape
    _, ho, wo = gy.shape
    gxp = np.zeros((c, h + 2 * pad, w_in + 2 * pad))
    for p in range(kh):
        for q in range(kw):
            # w[:, :, p, q]: (K, C); gy: (K, ho, wo) -> (C, ho, wo)
            contrib = np.tensordot(w[:, :, p, q], gy, axes=(0, 0))
            gxp[:, p:p + ho * stride:stride, q:q + wo * stride:stride] += contrib
    if pad:
        return np.ascontiguousarray(gxp[:, pad:pad + h, pad:pad + w_in])
    return gxp


def conv2d_weight_grad(x, gy, stride, pad, kh, kw):
    """Gradient of conv2d_forward w.r.t. the weights."""
    c = x.shape[0]
    k, ho, wo = gy.shape
    xp = _pad2d(x, pad)
    gw = np.empty((k, c, kh, kw))
    gy2 = gy.reshape(k, ho * wo)
    for p in range(kh):
        for q in range(kw):
            patch = xp[:, p:p + ho * stride:stride, q:q + wo * stride:stride]
            gw[:, :, p, q] = gy2 @ patch.reshape(c, ho * wo).T
    return gw
