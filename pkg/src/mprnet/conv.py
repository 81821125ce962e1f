"""Convolution, transposed convolution and pooling on (n, c, h, w) tensors."""
from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import Tensor, as_tensor


def conv_out_size(size, k, stride=1, pad=0, dil=1):
    return (size + 2 * pad - dil * (k - 1) - 1) // stride + 1


def _check_rank4(x, what):
    if x.ndim != 4:
        raise ValueError(f"{what} must be rank-4 (n, c, h, w), got shape {x.shape}")


def conv2d(x, weight, bias=None, stride=1, padding=0, dilation=1):
    """2-D cross-correlation. ``weight`` has shape (c_out, c_in, k, k)."""
    x, weight = as_tensor(x), as_tensor(weight)
    _check_rank4(x, "conv2d input")
    _check_rank4(weight, "conv2d weight")
    if stride < 1 or dilation < 1 or padding < 0:
        raise ValueError("conv2d needs stride >= 1, dilation >= 1, padding >= 0")
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise ValueError(f"conv2d: input has {cin} channels but weight expects {wcin}")
    oh = conv_out_size(h, kh, stride, padding, dilation)
    ow = conv_out_size(w, kw, stride, padding, dilation)
    if oh < 1 or ow < 1:
        raise ValueError(f"conv2d: input {h}x{w} too small for kernel {kh}x{kw} at dilation {dilation}")

    cols = kernels.im2col(x.data, kh, kw, stride, padding, dilation)
    wmat = weight.data.reshape(cout, -1)
    out = wmat @ cols
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ValueError(f"conv2d: bias shape {bias.shape} != ({cout},)")
        out = out + bias.data[None, :, None]
        parents.append(bias)
    out = out.reshape(n, cout, oh, ow)

    def bw(g):
        g = g.reshape(n, cout, oh * ow)
        gx = gw = gb = None
        if x.requires_grad:
            gx = kernels.col2im(wmat.T @ g, cin, h, w, kh, kw, stride, padding, dilation)
        if weight.requires_grad:
            gw = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        return (gx, gw, gb)[: len(parents)]

    return Tensor.from_op(out, tuple(parents), bw)


def conv_transpose2d(x, weight, bias=None, stride=1, padding=0):
    """Transposed convolution (adjoint of :func:`conv2d`). ``weight`` is (c_in, c_out, k, k).

    Output size is ``(h - 1) * stride - 2 * padding + k``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    _check_rank4(x, "transposed conv input")
    _check_rank4(weight, "transposed conv weight")
    if stride < 1 or padding < 0:
        raise ValueError("conv_transpose2d needs stride >= 1 and padding >= 0")
    n, cin, h, w = x.shape
    wcin, cout, kh, kw = weight.shape
    if wcin != cin:
        raise ValueError(f"conv_transpose2d: input has {cin} channels but weight expects {wcin}")
    oh = (h - 1) * stride - 2 * padding + kh
    ow = (w - 1) * stride - 2 * padding + kw
    if oh < 1 or ow < 1:
        raise ValueError("conv_transpose2d: non-positive output size")
    if conv_out_size(oh, kh, stride, padding) != h or conv_out_size(ow, kw, stride, padding) != w:
        raise ValueError("conv_transpose2d: geometry is not invertible for this input size")

    wmat = weight.data.reshape(cin, cout * kh * kw)
    xf = x.data.reshape(n, cin, h * w)
    out = kernels.col2im(wmat.T @ xf, cout, oh, ow, kh, kw, stride, padding, 1)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ValueError(f"conv_transpose2d: bias shape {bias.shape} != ({cout},)")
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def bw(g):
        gcols = kernels.im2col(g, kh, kw, stride, padding, 1)
        gx = gw = gb = None
        if x.requires_grad:
            gx = (wmat @ gcols).reshape(x.shape)
        if weight.requires_grad:
            gw = np.tensordot(xf, gcols, axes=([0, 2], [0, 2])).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb)[: len(parents)]

    return Tensor.from_op(out, tuple(parents), bw)


def avg_pool2d(x, k=2):
    """Non-overlapping k x k average pooling; trailing rows/columns are dropped."""
    x = as_tensor(x)
    _check_rank4(x, "avg_pool2d input")
    n, c, h, w = x.shape
    oh, ow = h // k, w // k
    if oh < 1 or ow < 1:
        raise ValueError(f"avg_pool2d: input {h}x{w} smaller than pool {k}")
    crop = x.data[:, :, : oh * k, : ow * k]
    out = crop.reshape(n, c, oh, k, ow, k).mean(axis=(3, 5))

    def bw(g):
        full = np.zeros_like(x.data)
        full[:, :, : oh * k, : ow * k] = np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k)
        return (full,)

    return Tensor.from_op(out, (x,), bw)


def global_avg_pool(x):
    """Mean over each channel's spatial plane, shape (n, c, 1, 1)."""
    x = as_tensor(x)
    _check_rank4(x, "global_avg_pool input")
    n, c, h, w = x.shape
    if h * w < 1:
        raise ValueError("global_avg_pool of an empty plane")
    out = x.data.mean(axis=(2, 3), keepdims=True)
    return Tensor.from_op(out, (x,), lambda g: (np.broadcast_to(g / (h * w), x.shape).copy(),))


def window_sum(m, k, stride=1, padding=0, dilation=1):
    """Count of nonzero-weighted entries per conv window (plain numpy, no graph).

    ``m`` has shape (n, 1, h, w); returns (n, 1, oh, ow).
    """
    n, _, h, w = m.shape
    cols = kernels.im2col(np.ascontiguousarray(m), k, k, stride, padding, dilation)
    oh = conv_out_size(h, k, stride, padding, dilation)
    ow = conv_out_size(w, k, stride, padding, dilation)
    return cols.sum(axis=1).reshape(n, 1, oh, ow)
