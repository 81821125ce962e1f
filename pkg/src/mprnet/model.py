"""Full inpainting network: partial-conv encoder, recurrent core, fusion, decoder."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fusion import GatedFeatureFusion, MultiScaleAggregation
from .mpr import MprConfig, MprCore
from .nn import InitContext, Module
from .pconv import PartialConv2d, check_mask
from .tensor import Tensor, as_tensor, leaky_relu

DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass
class ModelConfig:
    channels: int = 32
    sfr_iterations: int = 4
    tfr_iterations: int = 4
    tfr_window: int = 16
    sfr_dilation: int = 2
    weight_tied: bool = True
    se_reduction: int = 4
    mfa_dilations: tuple = (1, 3, 5, 7)
    seed: int = 0
    precision: str = "float64"

    def __post_init__(self):
        if self.precision not in DTYPES:
            raise ValueError(f"precision must be one of {sorted(DTYPES)}, got {self.precision!r}")
        self.mfa_dilations = tuple(int(d) for d in self.mfa_dilations)

    @property
    def dtype(self):
        return np.dtype(DTYPES[self.precision])

    def mpr(self):
        return MprConfig(
            sfr_iterations=self.sfr_iterations,
            tfr_iterations=self.tfr_iterations,
            channels=self.channels,
            sfr_dilation=self.sfr_dilation,
            tfr_window=self.tfr_window,
            weight_tied=self.weight_tied,
        )

    # integer-valued architecture fields stored alongside checkpoints
    META_FIELDS = ("channels", "sfr_iterations", "tfr_iterations", "tfr_window",
                   "sfr_dilation", "weight_tied", "se_reduction")

    def meta(self):
        out = {f"meta.{k}": np.array([float(getattr(self, k))], dtype=np.float32) for k in self.META_FIELDS}
        out["meta.mfa_dilations"] = np.array(self.mfa_dilations, dtype=np.float32)
        return out

    @classmethod
    def from_meta(cls, entries, **overrides):
        kwargs = {}
        for k in cls.META_FIELDS:
            key = f"meta.{k}"
            if key in entries:
                val = int(entries[key].reshape(-1)[0])
                kwargs[k] = bool(val) if k == "weight_tied" else val
        if "meta.mfa_dilations" in entries:
            kwargs["mfa_dilations"] = tuple(int(v) for v in entries["meta.mfa_dilations"].reshape(-1))
        kwargs.update(overrides)
        return cls(**kwargs)


class MprNet(Module):
    DOWNSAMPLE = 4

    def __init__(self, cfg=None):
        self.cfg = cfg = cfg or ModelConfig()
        ctx = InitContext(cfg.seed, cfg.dtype)
        c = cfg.channels
        self.enc1 = PartialConv2d(ctx, "enc1", 3, c, k=3, stride=2)
        self.enc2 = PartialConv2d(ctx, "enc2", c, c, k=3, stride=2)
        self.mpr = MprCore(ctx, cfg.mpr())
        self.gff = GatedFeatureFusion(ctx, c)
        self.mfa = MultiScaleAggregation(ctx, 2 * c, c, cfg.mfa_dilations, cfg.se_reduction)

    @property
    def dtype(self):
        return self.cfg.dtype

    def encode(self, image, mask):
        f, m = self.enc1(image, mask)
        f = leaky_relu(f)
        f, m = self.enc2(f, m)
        return leaky_relu(f), m

    def forward(self, image, mask, record_attention=False):
        """Map a damaged image (n, 3, H, W) and its mask (n, 1, H, W) to the raw output."""
        if not isinstance(image, Tensor):
            image = as_tensor(np.asarray(image, dtype=self.dtype))
        if image.ndim != 4 or image.shape[1] != 3:
            raise ValueError(f"expected an (n, 3, H, W) image, got {image.shape}")
        h, w = image.shape[2:]
        if h % self.DOWNSAMPLE or w % self.DOWNSAMPLE:
            raise ValueError(f"image size {h}x{w} must be divisible by {self.DOWNSAMPLE}")
        mask = check_mask(mask, image).astype(self.dtype)
        if not mask.any():
            raise ValueError("mask has no valid pixel")
        f0, m0 = self.encode(image, mask)
        fs, ft, m, trace = self.mpr.run(f0, m0, record_attention=record_attention)
        out = self.mfa(self.gff(fs, ft))
        self.last_trace = trace
        return out

    __call__ = forward


def composite(raw, gt_or_input, mask):
    """Keep known pixels from the input and fill holes from ``raw``."""
    raw = np.asarray(raw)
    mask = np.asarray(mask)
    return raw * (1 - mask) + np.asarray(gt_or_input) * mask
