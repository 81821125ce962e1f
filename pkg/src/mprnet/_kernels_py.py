"""Pure-numpy patch-matrix kernels; used when the compiled extension is absent."""
import numpy as np


def _out_size(size, k, stride, pad, dil):
    return (size + 2 * pad - dil * (k - 1) - 1) // stride + 1


def im2col(x, kh, kw, stride, pad, dil):
    n, c, h, w = x.shape
    oh = _out_size(h, kh, stride, pad, dil)
    ow = _out_size(w, kw, stride, pad, dil)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        y0 = i * dil
        for j in range(kw):
            x0 = j * dil
            out[:, :, i, j] = xp[:, :, y0:y0 + stride * (oh - 1) + 1:stride,
                                 x0:x0 + stride * (ow - 1) + 1:stride]
    return out.reshape(n, c * kh * kw, oh * ow)


def col2im(cols, c, h, w, kh, kw, stride, pad, dil):
    n = cols.shape[0]
    oh = _out_size(h, kh, stride, pad, dil)
    ow = _out_size(w, kw, stride, pad, dil)
    if cols.shape[1:] != (c * kh * kw, oh * ow):
        raise ValueError(
            f"col2im: column matrix {tuple(cols.shape)} does not match "
            f"(n, {c * kh * kw}, {oh * ow})"
        )
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        y0 = i * dil
        for j in range(kw):
            x0 = j * dil
            xp[:, :, y0:y0 + stride * (oh - 1) + 1:stride,
               x0:x0 + stride * (ow - 1) + 1:stride] += cols[:, :, i, j]
    return np.ascontiguousarray(xp[:, :, pad:pad + h, pad:pad + w])
