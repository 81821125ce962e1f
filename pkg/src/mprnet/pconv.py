"""Partial convolution with mask update, and an independent mask-closure oracle."""
from __future__ import annotations

import numpy as np

from .conv import conv2d, window_sum
from .nn import Conv2d, Module
from .tensor import as_tensor


def check_mask(m, like=None):
    """Validate a (n, 1, h, w) mask of exact zeros and ones."""
    m = np.asarray(m)
    if m.ndim != 4 or m.shape[1] != 1:
        raise ValueError(f"mask must have shape (n, 1, h, w), got {m.shape}")
    if not np.all((m == 0) | (m == 1)):
        raise ValueError("mask values must be exactly 0 or 1")
    if like is not None and (like.shape[0], like.shape[2], like.shape[3]) != (m.shape[0], m.shape[2], m.shape[3]):
        raise ValueError(f"mask {m.shape} is not aligned with feature map {like.shape}")
    return m


def partial_conv(f, m, weight, bias=None, stride=1, padding=0, dilation=1):
    """Mask-renormalised convolution; returns ``(features, updated_mask)``.

    At windows with at least one valid pixel the output is
    ``W . (f * m) * (window_size / valid_count) + b``; elsewhere it is 0 and
    the updated mask is 0. ``window_size`` counts the window positions that
    fall inside the map, so an all-ones mask reproduces plain ``conv2d``
    everywhere including the borders.
    """
    f, weight = as_tensor(f), as_tensor(weight)
    m = check_mask(m, f).astype(f.dtype)
    k = weight.shape[2]
    valid = window_sum(m, k, stride, padding, dilation)
    total = window_sum(np.ones_like(m), k, stride, padding, dilation)
    reached = valid > 0
    ratio = np.where(reached, total / np.where(reached, valid, 1.0), 0.0).astype(f.dtype)
    out = conv2d(f * m, weight, None, stride, padding, dilation) * ratio
    if bias is not None:
        out = out + as_tensor(bias).reshape(1, -1, 1, 1) * reached.astype(f.dtype)
    return out, reached.astype(f.dtype)


class PartialConv2d(Module):
    def __init__(self, ctx, name, cin, cout, k=3, stride=1, dilation=1, padding=None):
        self.conv = Conv2d(ctx, name, cin, cout, k, stride, padding, dilation)

    def __call__(self, f, m):
        c = self.conv
        return partial_conv(f, m, c.weight, c.bias, c.stride, c.padding, c.dilation)


# -- oracle ---------------------------------------------------------------
def _update_once(valid, k, stride, dilation):
    # Direct simulation of the mask rule: a pixel becomes valid when any
    # in-bounds tap of its window is valid. Plain loops, no patch matrices.
    h, w = valid.shape
    pad = dilation * (k - 1) // 2
    oh = (h + 2 * pad - dilation * (k - 1) - 1) // stride + 1
    ow = (w + 2 * pad - dilation * (k - 1) - 1) // stride + 1
    out = np.zeros((oh, ow), dtype=bool)
    for y in range(oh):
        for x in range(ow):
            hit = False
            for i in range(k):
                iy = y * stride - pad + i * dilation
                if iy < 0 or iy >= h:
                    continue
                for j in range(k):
                    ix = x * stride - pad + j * dilation
                    if 0 <= ix < w and valid[iy, ix]:
                        hit = True
                        break
                if hit:
                    break
            out[y, x] = hit
    return out


def _update_once_fast(valid, k, dilation):
    # Same-padded stride-1 variant via array shifts.
    h, w = valid.shape
    pad = dilation * (k - 1) // 2
    padded = np.zeros((h + 2 * pad, w + 2 * pad), dtype=bool)
    padded[pad:pad + h, pad:pad + w] = valid
    out = np.zeros_like(valid)
    for i in range(k):
        for j in range(k):
            out |= padded[i * dilation:i * dilation + h, j * dilation:j * dilation + w]
    return out


def mask_closure_oracle(initial, kernel=3, stride=1, layers_per_recurrence=2, dilation=1,
                        max_recurrences=None):
    """Number of recurrences until the mask is all ones, or ``None`` if it never closes.

    ``initial`` is a 2-D 0/1 array (or (1, 1, h, w)). With ``max_recurrences``
    unset the simulation runs until the mask stops changing.
    """
    sched = [(kernel, stride, dilation, layers_per_recurrence)]
    return closure_index(initial, sched, repeat_last=True, max_recurrences=max_recurrences)


def closure_index(initial, schedule, repeat_last=False, max_recurrences=None):
    """First recurrence (1-based) after which the mask is all ones.

    ``schedule`` lists one ``(kernel, stride, dilation, layers)`` geometry per
    recurrence; with ``repeat_last`` the final geometry repeats until a fixed
    point or ``max_recurrences``. Returns 0 for an already-full mask and
    ``None`` when closure is not reached.
    """
    valid = np.asarray(initial).reshape(np.asarray(initial).shape[-2:]).astype(bool)
    if not valid.any():
        raise ValueError("mask has no valid pixel; closure is impossible")
    if valid.all():
        return 0
    step = 0
    while True:
        if max_recurrences is not None and step >= max_recurrences:
            return None
        if step < len(schedule):
            k, s, d, layers = schedule[step]
        elif repeat_last:
            k, s, d, layers = schedule[-1]
        else:
            return None
        before = valid
        for _ in range(layers):
            valid = _update_once_fast(valid, k, d) if s == 1 else _update_once(valid, k, s, d)
        step += 1
        if valid.all():
            return step
        if repeat_last and step >= len(schedule) and np.array_equal(before, valid):
            return None
