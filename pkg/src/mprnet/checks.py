"""Gradient-check suite over every differentiable operation of the network.

Each case builds a small float64 problem, perturbs inputs and parameters,
and compares backprop against central differences (h = 1e-3).
"""
from __future__ import annotations

import time

import numpy as np

from .attention import AttentionState, KnowledgeConsistentAttention, allowed_sources, attention_scores
from .attention import reconstruct_features, similarity_matrix
from .conv import avg_pool2d, conv2d, conv_transpose2d, global_avg_pool
from .fusion import GatedFeatureFusion, MultiScaleAggregation, gated_fuse, mfa_aggregate
from .gradcheck import grad_check
from .losses import (FeaturePyramid, LossWeights, joint_loss, perceptual_loss,
                     reconstruction_losses, style_loss)
from .data import InpaintSample
from .model import ModelConfig, MprNet
from .mpr import MprConfig, MprCore, run_mpr
from .nn import InitContext
from .pconv import partial_conv
from .tensor import concat, leaky_relu, sigmoid, softmax

TOL = 1e-3
H = 1e-3


def _hole_mask(n, h, w, box):
    m = np.ones((n, 1, h, w))
    y0, y1, x0, x1 = box
    m[..., y0:y1, x0:x1] = 0.0
    return m


def _jitter(params, seed, scale=0.1, names=("bias",)):
    """Give zero-initialised parameters nonzero values so their gradients are exercised."""
    rng = np.random.default_rng(seed)
    for p in params:
        if p.name.endswith(names):
            p.data[...] = rng.normal(0.0, scale, size=p.shape)


def _case_conv2d():
    return grad_check(lambda x, w, b: conv2d(x, w, b, stride=1, padding=1),
                      [(1, 2, 5, 5), (3, 2, 3, 3), (3,)], name="conv2d")


def _case_conv2d_strided():
    return grad_check(lambda x, w: conv2d(x, w, None, stride=2, padding=2, dilation=2),
                      [(2, 2, 7, 6), (2, 2, 3, 3)], name="conv2d stride 2 dilation 2")


def _case_conv_transpose():
    return grad_check(lambda x, w, b: conv_transpose2d(x, w, b, stride=2, padding=1),
                      [(1, 3, 4, 4), (3, 2, 4, 4), (2,)], name="conv_transpose2d")


def _case_pointwise():
    return grad_check(lambda a, b: sigmoid(leaky_relu(a * b + a) - b) / (b * b + 1.0),
                      [(3, 4), (3, 4)], name="elementwise chain")


def _case_softmax():
    valid = np.ones((2, 3, 5), dtype=bool)
    valid[:, :, 1] = False
    return grad_check(lambda x: softmax(x, axis=-1, valid=valid), [(2, 3, 5)], name="masked softmax")


def _case_pooling():
    return grad_check(lambda a, b: concat([avg_pool2d(a, 2), global_avg_pool(b) * a[:, :, :2, :2]], axis=1),
                      [(1, 2, 4, 4), (1, 2, 4, 4)], name="pooling and concat")


def _case_partial_conv():
    m = _hole_mask(1, 6, 6, (1, 4, 2, 5))

    def fn(f, w, b):
        out, _ = partial_conv(f, m, w, b, stride=1, padding=1)
        return out

    return grad_check(fn, [(1, 2, 6, 6), (3, 2, 3, 3), (3,)], name="partial_conv")


def _case_attention_reconstruction():
    valid = _hole_mask(1, 5, 5, (1, 3, 1, 4))
    allowed = allowed_sources(valid)

    def fn(f):
        scores, _ = attention_scores(similarity_matrix(f), allowed, None, 0.5)
        return reconstruct_features(f, scores)

    return grad_check(fn, [(1, 3, 5, 5)], name="attention reconstruction")


def _case_attention_recurrent():
    ctx = InitContext(seed=11)
    kca = KnowledgeConsistentAttention(ctx, "att", 3, window=3)
    kca.lam_raw.data[...] = 0.4
    _jitter(kca.parameters(), 12)
    v0 = _hole_mask(1, 5, 5, (1, 4, 1, 4))
    v1 = _hole_mask(1, 5, 5, (2, 3, 2, 3))

    def fn(f0, f1):
        out0, state, _ = kca(f0, v0, AttentionState())
        out1, _, _ = kca(f1 + out0, v1, state)
        return out1

    return grad_check(fn, [(1, 3, 5, 5), (1, 3, 5, 5)], params=kca.parameters(),
                      name="attention across recurrences")


def _case_run_mpr():
    cfg = MprConfig(sfr_iterations=2, tfr_iterations=2, channels=3, tfr_window=8)
    core = MprCore(InitContext(seed=5), cfg)
    _jitter(core.parameters(), 6, names=("bias", "lambda", "beta"))
    m0 = _hole_mask(1, 16, 16, (5, 11, 4, 12))

    def fn(f0):
        fs, ft, _, _ = run_mpr(core, f0, m0)
        return concat([fs, ft], axis=1)

    return grad_check(fn, [(1, 3, 16, 16)], params=core.parameters(), max_entries=4,
                      name="run_mpr 16x16 map")


def _case_gff():
    gff = GatedFeatureFusion(InitContext(seed=7), 3)
    gff.alpha.data[...] = 0.6
    gff.beta.data[...] = -0.4
    _jitter(gff.parameters(), 8)
    return grad_check(lambda fs, ft: gated_fuse(fs, ft, gff), [(1, 3, 5, 5), (1, 3, 5, 5)],
                      params=gff.parameters(), name="gated_fuse")


def _case_mfa():
    mfa = MultiScaleAggregation(InitContext(seed=9), 4, 2, dilations=(1, 3), se_reduction=2)
    _jitter(mfa.parameters(), 10)
    return grad_check(lambda fb: mfa_aggregate(fb, mfa), [(1, 4, 7, 7)], params=mfa.parameters(),
                      max_entries=6, name="mfa_aggregate")


def _loss_inputs(seed=13):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0.0, 1.0, size=(1, 3, 8, 8))
    mask = _hole_mask(1, 8, 8, (2, 6, 1, 5))
    return gt, mask


def _case_hole_loss():
    gt, mask = _loss_inputs()
    return grad_check(lambda out: reconstruction_losses(out, gt, mask)[0], [(1, 3, 8, 8)],
                      low=0.0, high=1.0, name="hole loss")


def _case_valid_loss():
    gt, mask = _loss_inputs()
    return grad_check(lambda out: reconstruction_losses(out, gt, mask)[1], [(1, 3, 8, 8)],
                      low=0.0, high=1.0, name="valid loss")


def _case_perceptual_loss():
    gt, _ = _loss_inputs()
    pyr = FeaturePyramid(seed=3)
    return grad_check(lambda out: perceptual_loss(out, gt, pyr), [(1, 3, 8, 8)],
                      low=0.0, high=1.0, name="perceptual loss")


def _case_style_loss():
    gt, _ = _loss_inputs()
    pyr = FeaturePyramid(seed=3)
    return grad_check(lambda out: style_loss(out, gt, pyr), [(1, 3, 8, 8)],
                      low=0.0, high=1.0, name="style loss")


def _case_joint_loss():
    gt, mask = _loss_inputs()
    pyr = FeaturePyramid(seed=3)
    sample = InpaintSample(gt, mask)
    return grad_check(lambda out: joint_loss(sample, out, LossWeights(), pyr)[0], [(1, 3, 8, 8)],
                      low=0.0, high=1.0, name="joint loss")


def _case_end_to_end():
    # 64x64 image -> 16x16 feature map inside the recurrent core
    net = MprNet(ModelConfig(channels=4, seed=1, precision="float64"))
    for p in net.parameters():
        if p.name in ("gff.alpha", "gff.beta"):
            p.data[...] = 0.3
    _jitter(net.parameters(), 2)
    rng = np.random.default_rng(0)
    gt = rng.uniform(0.0, 1.0, size=(1, 3, 64, 64))
    mask = _hole_mask(1, 64, 64, (20, 40, 24, 44))
    sample = InpaintSample(gt, mask)
    pyr = FeaturePyramid(seed=3)

    def fn():
        return joint_loss(sample, net(sample.damaged, mask), LossWeights(), pyr)[0]

    return grad_check(fn, [], params=net.parameters(), max_entries=3, name="end-to-end 16x16 map")


CASES = {
    "conv2d": _case_conv2d,
    "conv2d_strided": _case_conv2d_strided,
    "conv_transpose2d": _case_conv_transpose,
    "elementwise": _case_pointwise,
    "softmax": _case_softmax,
    "pooling": _case_pooling,
    "partial_conv": _case_partial_conv,
    "attention": _case_attention_reconstruction,
    "attention_recurrent": _case_attention_recurrent,
    "run_mpr": _case_run_mpr,
    "gated_fuse": _case_gff,
    "mfa_aggregate": _case_mfa,
    "hole_loss": _case_hole_loss,
    "valid_loss": _case_valid_loss,
    "perceptual_loss": _case_perceptual_loss,
    "style_loss": _case_style_loss,
    "joint_loss": _case_joint_loss,
    "end_to_end": _case_end_to_end,
}


def run_suite(names=None, echo=None):
    """Run the named cases (all by default); returns a list of reports."""
    names = list(CASES) if names is None else list(names)
    unknown = [n for n in names if n not in CASES]
    if unknown:
        raise KeyError(f"unknown grad-check case(s): {', '.join(unknown)}")
    reports = []
    for n in names:
        t0 = time.perf_counter()
        rep = CASES[n]()
        reports.append(rep)
        if echo is not None:
            echo(f"{rep.line()} [{time.perf_counter() - t0:.1f}s]")
    return reports
