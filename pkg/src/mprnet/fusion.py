"""Gated exchange between structure and texture streams, then multi-scale
dilated aggregation with channel gating and a transposed-conv decoder."""
from __future__ import annotations

from .conv import global_avg_pool
from .nn import Conv2d, ConvTranspose2d, Module
from .tensor import as_tensor, concat, concat_channels, leaky_relu, relu, sigmoid


class GatedFeatureFusion(Module):
    """Soft-gated mutual refinement; the mixing weights start at zero."""

    def __init__(self, ctx, channels, name="gff"):
        self.g = Conv2d(ctx, f"{name}.g", 2 * channels, 1, k=3)
        self.h = Conv2d(ctx, f"{name}.h", 2 * channels, 1, k=3)
        self.alpha = ctx.const(f"{name}.alpha", (1,), 0.0)
        self.beta = ctx.const(f"{name}.beta", (1,), 0.0)

    def gates(self, fs, ft):
        joint = concat_channels(ft, fs)
        return sigmoid(self.g(joint)), sigmoid(self.h(joint))

    def __call__(self, fs, ft):
        fs, ft = as_tensor(fs), as_tensor(ft)
        if fs.shape != ft.shape:
            raise ValueError(f"gated fusion needs equal shapes, got {fs.shape} and {ft.shape}")
        gt, gs = self.gates(fs, ft)
        fs2 = self.alpha * (gt * ft) + fs
        ft2 = self.beta * (gs * fs) + ft
        return concat_channels(fs2, ft2)


def gated_fuse(fs, ft, params):
    return params(fs, ft)


class SqueezeExcitation(Module):
    def __init__(self, ctx, channels, reduction=4, name="se"):
        hidden = max(1, channels // reduction)
        self.fc1 = Conv2d(ctx, f"{name}.fc1", channels, hidden, k=1)
        self.fc2 = Conv2d(ctx, f"{name}.fc2", hidden, channels, k=1)

    def gates(self, x):
        return sigmoid(self.fc2(relu(self.fc1(global_avg_pool(x)))))

    def __call__(self, x):
        return x * self.gates(x)


class MultiScaleAggregation(Module):
    """Dilated branches -> channel gating -> skip concat -> x4 transposed-conv decoder."""

    def __init__(self, ctx, in_channels, branch_channels, dilations=(1, 3, 5, 7),
                 se_reduction=4, out_channels=3, name="mfa"):
        self.dilations = tuple(dilations)
        self.branches = [
            Conv2d(ctx, f"{name}.branch{d}", in_channels, branch_channels, k=3, dilation=d, padding=d)
            for d in self.dilations
        ]
        cat = branch_channels * len(self.dilations)
        self.se = SqueezeExcitation(ctx, cat, se_reduction, name=f"{name}.se")
        self.inner = ConvTranspose2d(ctx, f"{name}.inner", cat, in_channels, k=3, stride=1, padding=1)
        self.up1 = ConvTranspose2d(ctx, f"{name}.up1", 2 * in_channels, branch_channels, k=4, stride=2, padding=1)
        self.up2 = ConvTranspose2d(ctx, f"{name}.up2", branch_channels, out_channels, k=4, stride=2, padding=1)

    def min_size(self):
        return 2 * max(self.dilations) + 1

    def branch_outputs(self, fb):
        return [leaky_relu(b(fb)) for b in self.branches]

    def __call__(self, fb):
        fb = as_tensor(fb)
        if min(fb.shape[2:]) < self.min_size():
            raise ValueError(
                f"multi-scale aggregation needs maps of at least {self.min_size()}x{self.min_size()}, "
                f"got {fb.shape[2]}x{fb.shape[3]}"
            )
        fc = self.se(concat(self.branch_outputs(fb), axis=1))
        skip = concat_channels(leaky_relu(self.inner(fc)), fb)
        return self.up2(leaky_relu(self.up1(skip)))


def mfa_aggregate(fb, params):
    return params(fb)
