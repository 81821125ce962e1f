"""Two-stage recurrent reasoning: structure steps (wide, dilated) followed by
texture steps (dense, windowed attention), merged by a learnable weight."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionRecord, AttentionState, KnowledgeConsistentAttention
from .nn import Module
from .pconv import PartialConv2d, check_mask
from .tensor import Tensor, as_tensor, leaky_relu, sigmoid

SFR, TFR = "SFR", "TFR"


@dataclass
class MprConfig:
    sfr_iterations: int = 4
    tfr_iterations: int = 4
    channels: int = 32
    sfr_dilation: int = 2
    tfr_window: int = 16
    layers_per_step: int = 2
    kernel: int = 3
    weight_tied: bool = True

    def __post_init__(self):
        if self.sfr_iterations < 1 or self.tfr_iterations < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.layers_per_step < 1:
            raise ValueError("layers_per_step must be >= 1")

    def closure_schedule(self):
        """Per-recurrence (kernel, stride, dilation, layers) geometry for the closure oracle."""
        sfr = (self.kernel, 1, self.sfr_dilation, self.layers_per_step)
        tfr = (self.kernel, 1, 1, self.layers_per_step)
        return [sfr] * self.sfr_iterations + [tfr] * self.tfr_iterations


@dataclass
class TraceEntry:
    features: Tensor
    mask: np.ndarray
    stage: str
    attention: AttentionRecord | None = None


@dataclass
class RecurrenceTrace:
    entries: list = field(default_factory=list)

    def append(self, entry):
        if self.entries:
            prev = self.entries[-1]
            if prev.features.shape != entry.features.shape:
                raise ValueError("trace entries must share one shape")
            if np.any(entry.mask < prev.mask):
                raise RuntimeError("mask shrank between recurrences")
        self.entries.append(entry)

    def stage(self, tag):
        return [e for e in self.entries if e.stage == tag]

    def closure_index(self):
        """1-based index of the first entry whose mask is all ones, else None."""
        for i, e in enumerate(self.entries, start=1):
            if np.all(e.mask == 1):
                return i
        return None

    def __len__(self):
        return len(self.entries)


def stage_average(entries):
    """Sum of features over sum of masks, with 0 where no entry is valid."""
    if not entries:
        raise ValueError("adaptive merge needs at least one entry per stage")
    total = entries[0].features
    count = entries[0].mask.copy()
    for e in entries[1:]:
        total = total + e.features
        count = count + e.mask
    inv = np.where(count > 0, 1.0 / np.where(count > 0, count, 1.0), 0.0).astype(total.dtype)
    return total * inv


def adaptive_merge(trace, beta):
    """Structure stream ``beta * avg(SFR)`` and texture stream ``(1 - beta) * avg(TFR)``."""
    fs = stage_average(trace.stage(SFR))
    ft = stage_average(trace.stage(TFR))
    if isinstance(beta, Tensor):
        b = beta.reshape(1, 1, 1, 1)
        return fs * b, ft * (1.0 - b)
    return fs * float(beta), ft * (1.0 - float(beta))


class MprCore(Module):
    def __init__(self, ctx, cfg, name="mpr"):
        self.cfg = cfg
        c, k = cfg.channels, cfg.kernel

        def layers(prefix, dilation):
            return [PartialConv2d(ctx, f"{prefix}.pconv{j}", c, c, k, 1, dilation)
                    for j in range(cfg.layers_per_step)]

        if cfg.weight_tied:
            self.sfr_layers = [layers(f"{name}.sfr", cfg.sfr_dilation)] * cfg.sfr_iterations
            self.tfr_layers = [layers(f"{name}.tfr", 1)] * cfg.tfr_iterations
        else:
            self.sfr_layers = [layers(f"{name}.sfr{i}", cfg.sfr_dilation) for i in range(cfg.sfr_iterations)]
            self.tfr_layers = [layers(f"{name}.tfr{i}", 1) for i in range(cfg.tfr_iterations)]
        self.sfr_attention = KnowledgeConsistentAttention(ctx, f"{name}.sfr_att", c, window=None)
        self.tfr_attention = KnowledgeConsistentAttention(ctx, f"{name}.tfr_att", c, window=cfg.tfr_window)
        self.beta_raw = ctx.const(f"{name}.beta", (1,), 0.0)

    def beta(self):
        return sigmoid(self.beta_raw)

    def _step(self, layer_stack, attention, f, m, state):
        check_mask(m, f)
        if not np.any(m):
            raise ValueError("recurrence step needs at least one valid pixel")
        for layer in layer_stack:
            f, m = layer(f, m)
            f = leaky_relu(f)
        out, state, record = attention(f, m, state)
        return out, m, state, record

    def sfr_step(self, f, m, state, index=0):
        return self._step(self.sfr_layers[index], self.sfr_attention, f, m, state)

    def tfr_step(self, f, m, state, index=0):
        return self._step(self.tfr_layers[index], self.tfr_attention, f, m, state)

    def run(self, f0, m0, state=None, record_attention=False):
        """Run all structure then texture steps; returns ``(F_s, F_t, mask, trace)``."""
        f, m = as_tensor(f0), check_mask(m0, as_tensor(f0)).astype(as_tensor(f0).dtype)
        state = state or AttentionState()
        trace = RecurrenceTrace()
        for i in range(self.cfg.sfr_iterations):
            f, m, state, rec = self.sfr_step(f, m, state, i)
            trace.append(TraceEntry(f, m, SFR, rec if record_attention else None))
        for i in range(self.cfg.tfr_iterations):
            f, m, state, rec = self.tfr_step(f, m, state, i)
            trace.append(TraceEntry(f, m, TFR, rec if record_attention else None))
        fs, ft = adaptive_merge(trace, self.beta())
        return fs, ft, m, trace


def run_mpr(core, f0, m0, **kwargs):
    return core.run(f0, m0, **kwargs)
