# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled patch-matrix kernels backing every convolution in the package."""
import numpy as np

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, int kh, int kw, int stride, int pad, int dil):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - dil * (kh - 1) - 1) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - dil * (kw - 1) - 1) // stride + 1
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((n, c * kh * kw, oh * ow), dtype=dtype)
    cdef real[:, :, ::1] o = out
    cdef Py_ssize_t b, ch, i, j, y, xo, row, iy, ix
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for y in range(oh):
                        iy = y * stride - pad + i * dil
                        if iy < 0 or iy >= h:
                            continue
                        for xo in range(ow):
                            ix = xo * stride - pad + j * dil
                            if ix >= 0 and ix < w:
                                o[b, row, y * ow + xo] = x[b, ch, iy, ix]
    return out


def col2im(real[:, :, ::1] cols, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w,
           int kh, int kw, int stride, int pad, int dil):
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t oh = (h + 2 * pad - dil * (kh - 1) - 1) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - dil * (kw - 1) - 1) // stride + 1
    if cols.shape[1] != c * kh * kw or cols.shape[2] != oh * ow:
        raise ValueError(
            f"col2im: column matrix {tuple(cols.shape)} does not match "
            f"(n, {c * kh * kw}, {oh * ow})"
        )
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] o = out
    cdef Py_ssize_t b, ch, i, j, y, xo, row, iy, ix
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for y in range(oh):
                        iy = y * stride - pad + i * dil
                        if iy < 0 or iy >= h:
                            continue
                        for xo in range(ow):
                            ix = xo * stride - pad + j * dil
                            if ix >= 0 and ix < w:
                                o[b, ch, iy, ix] += cols[b, row, y * ow + xo]
    return out
