"""Numpy fallback kernels for 2-D convolution (im2col + BLAS matmul).

Shapes follow the NCHW / OIHW convention.  All arrays are float32 and
C-contiguous; stride and padding are single integers applied to both
spatial axes.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def _im2col(x, kh, kw, stride, pad):
    """Return patches with shape (N, C*kh*kw, OH*OW)."""
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    hp, wp = x.shape[2], x.shape[3]
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    sn, sc, sh, sw = x.strides
    patches = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, kh, kw, oh, ow),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return np.ascontiguousarray(patches).reshape(n, c * kh * kw, oh * ow), oh, ow


def conv2d_forward(x, w, b, stride, pad):
    n, c, h, wdt = x.shape
    o, _, kh, kw = w.shape
    cols, oh, ow = _im2col(x, kh, kw, stride, pad)
    wmat = w.reshape(o, c * kh * kw)
    out = np.einsum("ok,nkl->nol", wmat, cols, optimize=True)
    if b is not None:
        out += b[None, :, None]
    return np.ascontiguousarray(out.reshape(n, o, oh, ow), dtype=np.float32)


def conv2d_backward_input(dout, w, stride, pad, h, wdt):
    """Gradient w.r.t. the input, via zero-dilation + full correlation.

    The dilated gradient is padded asymmetrically: the leading pad aligns
    the correlation with input position 0, the trailing pad additionally
    covers the stride remainder so kernel-overhang contributions to the
    last rows/columns are kept.
    """
    n, o, oh, ow = dout.shape
    _, c, kh, kw = w.shape
    if pad > kh - 1 or pad > kw - 1:
        raise ValueError("padding larger than kernel-1 is not supported")
    if stride > 1:
        dil = np.zeros((n, o, (oh - 1) * stride + 1, (ow - 1) * stride + 1), np.float32)
        dil[:, :, ::stride, ::stride] = dout
    else:
        dil = dout
    fh, eh = kh - 1 - pad, h + pad - (oh - 1) * stride - 1
    fw, ew = kw - 1 - pad, wdt + pad - (ow - 1) * stride - 1
    padded = np.pad(dil, ((0, 0), (0, 0), (fh, eh), (fw, ew)))
    wflip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dx = conv2d_forward(padded, wflip, None, 1, 0)
    return np.ascontiguousarray(dx[:, :, :h, :wdt])


def conv2d_backward_weight(x, dout, stride, pad, kh, kw):
    n, c, h, wdt = x.shape
    o = dout.shape[1]
    cols, oh, ow = _im2col(x, kh, kw, stride, pad)
    g = dout.reshape(n, o, oh * ow)
    dw = np.einsum("nol,nkl->ok", g, cols, optimize=True)
    db = dout.sum(axis=(0, 2, 3))
    return dw.reshape(o, c, kh, kw).astype(np.float32, copy=False), db.astype(np.float32, copy=False)
