"""Training objective: hole/valid reconstruction, perceptual and style terms.

The perceptual and style terms read features from :class:`FeaturePyramid`, a
fixed random three-stage conv/pool stack standing in for a pretrained
classifier backbone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conv import avg_pool2d, conv2d
from .nn import InitContext
from .tensor import as_tensor, leaky_relu, mean, tabs, tsum


@dataclass
class LossWeights:
    hole: float = 6.0
    valid: float = 1.0
    perceptual: float = 0.1
    style: float = 180.0

    def __post_init__(self):
        for k in ("hole", "valid", "perceptual", "style"):
            if getattr(self, k) < 0:
                raise ValueError(f"loss weight {k} must be non-negative")


class FeaturePyramid:
    """Three conv(3x3) -> leaky ReLU -> avgpool(2) stages with frozen weights.

    Inputs are shifted by ``-center`` first. Without it the unit-range
    offset dominates every Gram matrix and the style term mostly matches
    channel means. ``linear=True`` bypasses the activations (used to test
    linearity).
    """

    def __init__(self, seed=0, channels=(8, 16, 32), in_channels=3, dtype=np.float64,
                 linear=False, weights=None, center=0.5):
        self.channels = tuple(channels)
        self.linear = linear
        self.center = float(center)
        self.dtype = np.dtype(dtype)
        ctx = InitContext(seed, dtype)
        self.weights = []
        cin = in_channels
        for i, cout in enumerate(self.channels):
            # std sqrt(1/fan_in): features keep roughly the input's scale instead of growing
            w = ctx.normal(f"pyramid.stage{i}.weight", (cout, cin, 3, 3), np.sqrt(1.0 / (cin * 9))).data
            b = np.zeros(cout, dtype=self.dtype)
            if weights is not None:
                w = np.asarray(weights[f"pyramid.stage{i}.weight"], dtype=self.dtype)
                b = np.asarray(weights.get(f"pyramid.stage{i}.bias", b), dtype=self.dtype)
                if w.shape != (cout, cin, 3, 3):
                    raise ValueError(f"pyramid stage {i} weight has shape {w.shape}, expected {(cout, cin, 3, 3)}")
            w.setflags(write=False)
            b.setflags(write=False)
            self.weights.append((w, b))
            cin = cout

    def state(self):
        out = {}
        for i, (w, b) in enumerate(self.weights):
            out[f"pyramid.stage{i}.weight"] = w
            out[f"pyramid.stage{i}.bias"] = b
        return out

    def __call__(self, x):
        x = as_tensor(x)
        if self.center:
            x = x - self.center
        feats = []
        for w, b in self.weights:
            x = conv2d(x, w.astype(x.dtype), b.astype(x.dtype), 1, 1)
            if not self.linear:
                x = leaky_relu(x)
            x = avg_pool2d(x, 2)
            feats.append(x)
        return feats


def reconstruction_losses(out, gt, mask):
    """L1 error inside holes and in the known region, each over the element count of ``gt``."""
    out, gt = as_tensor(out), as_tensor(gt)
    if out.shape != gt.shape:
        raise ValueError(f"output {out.shape} and ground truth {gt.shape} differ in shape")
    mask = np.asarray(mask, dtype=out.dtype)
    if mask.ndim != 4 or mask.shape[0] != gt.shape[0] or mask.shape[2:] != gt.shape[2:]:
        raise ValueError(f"mask {mask.shape} does not match images {gt.shape}")
    n = gt.size
    err = tabs(out - gt)
    hole = tsum(err * (1.0 - mask)) * (1.0 / n)
    valid = tsum(err * mask) * (1.0 / n)
    return hole, valid


def perceptual_from_features(feats_out, feats_gt):
    total = None
    for fo, fg in zip(feats_out, feats_gt):
        term = mean(tabs(as_tensor(fg) - fo))
        total = term if total is None else total + term
    return total


def gram(phi):
    phi = as_tensor(phi)
    n, c, h, w = phi.shape
    flat = phi.reshape(n, c, h * w)
    return flat @ flat.transpose(0, 2, 1)


def style_from_features(feats_out, feats_gt):
    """Sum over stages of mean |gram_gt - gram_out| / (H W C); the mean supplies 1/(C C)."""
    total = None
    for fo, fg in zip(feats_out, feats_gt):
        fo, fg = as_tensor(fo), as_tensor(fg)
        n, c, h, w = fo.shape
        diff = gram(fg) - gram(fo)
        term = mean(tabs(diff)) * (1.0 / (h * w * c))
        total = term if total is None else total + term
    return total


def perceptual_loss(out, gt, pyramid):
    return perceptual_from_features(pyramid(out), pyramid(gt))


def style_loss(out, gt, pyramid):
    return style_from_features(pyramid(out), pyramid(gt))


def joint_loss(sample, out, weights, pyramid):
    """Weighted four-term objective; returns ``(total, components)``.

    ``sample`` is anything with ``gt`` and ``mask`` arrays, e.g. an InpaintSample.
    """
    gt, mask = sample.gt, sample.mask
    hole, valid = reconstruction_losses(out, gt, mask)
    fo, fg = pyramid(out), pyramid(as_tensor(gt).detach())
    perc = perceptual_from_features(fo, fg)
    sty = style_from_features(fo, fg)
    total = hole * weights.hole + valid * weights.valid + perc * weights.perceptual + sty * weights.style
    parts = {"l_hole": hole.item(), "l_valid": valid.item(), "l_perceptual": perc.item(),
             "l_style": sty.item(), "l_joint": total.item()}
    return total, parts


def weighted_sum(components, weights):
    """Scalar combination of precomputed component values."""
    return (weights.hole * components[0] + weights.valid * components[1]
            + weights.perceptual * components[2] + weights.style * components[3])
