"""Minimal module system: named parameters, seeded initialisation, conv layers."""
from __future__ import annotations

import zlib

import numpy as np

from .conv import conv2d, conv_transpose2d
from .tensor import Parameter


class InitContext:
    """Carries the root seed and working dtype into parameter construction.

    Every parameter draws from a generator keyed on (seed, crc32(name)), so
    initial values do not depend on construction order. Values are rounded
    to the float32 grid so checkpoints reproduce them exactly in either
    precision.
    """

    def __init__(self, seed=0, dtype=np.float64):
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)

    def rng(self, name):
        return np.random.default_rng([self.seed, zlib.crc32(name.encode())])

    def normal(self, name, shape, std):
        vals = self.rng(name).normal(0.0, std, size=shape).astype(np.float32)
        return Parameter(vals.astype(self.dtype), name=name)

    def const(self, name, shape, value=0.0):
        return Parameter(np.full(shape, value, dtype=np.float32).astype(self.dtype), name=name)


class Module:
    """Base class; parameters and submodules are discovered from attributes."""

    def named_parameters(self):
        out = []

        def visit(val):
            if isinstance(val, Parameter):
                out.append((val.name, val))
            elif isinstance(val, Module):
                out.extend(val.named_parameters())
            elif isinstance(val, (list, tuple)):
                for item in val:
                    visit(item)

        for val in vars(self).values():
            visit(val)
        # weight-tied stacks list the same parameter several times
        seen, unique = set(), []
        for name, p in out:
            if id(p) not in seen:
                seen.add(id(p))
                unique.append((name, p))
        return unique

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


class Conv2d(Module):
    def __init__(self, ctx, name, cin, cout, k=3, stride=1, padding=None, dilation=1, bias=True):
        if padding is None:
            padding = dilation * (k - 1) // 2
        self.stride, self.padding, self.dilation = stride, padding, dilation
        self.weight = ctx.normal(f"{name}.weight", (cout, cin, k, k), np.sqrt(2.0 / (cin * k * k)))
        self.bias = ctx.const(f"{name}.bias", (cout,)) if bias else None

    def __call__(self, x):
        return conv2d(x, self.weight, self.bias, self.stride, self.padding, self.dilation)


class ConvTranspose2d(Module):
    def __init__(self, ctx, name, cin, cout, k=4, stride=2, padding=1, bias=True):
        self.stride, self.padding = stride, padding
        # fan-in of a transposed conv: input channels contributing per output pixel
        fan_in = cin * k * k / (stride * stride)
        self.weight = ctx.normal(f"{name}.weight", (cin, cout, k, k), np.sqrt(2.0 / fan_in))
        self.bias = ctx.const(f"{name}.bias", (cout,)) if bias else None

    def __call__(self, x):
        return conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)
