"""PSNR, SSIM and per-bucket evaluation reports."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .data import BUCKETS

PSNR_CAP = 100.0


def _arr(x):
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB, capped at 100 dB for identical inputs."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValueError("psnr: peak must be positive")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse)))


def _box_mean(x, k):
    # mean over every k x k window (stride 1, valid positions) via integral image
    s = np.pad(x, ((1, 0), (1, 0))).cumsum(0).cumsum(1)
    return (s[k:, k:] - s[:-k, k:] - s[k:, :-k] + s[:-k, :-k]) / (k * k)


def ssim_map(a, b, window=8, peak=1.0):
    """Local SSIM over every ``window`` x ``window`` position of two 2-D planes."""
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    mu_a, mu_b = _box_mean(a, window), _box_mean(b, window)
    var_a = _box_mean(a * a, window) - mu_a * mu_a
    var_b = _box_mean(b * b, window) - mu_b * mu_b
    cov = _box_mean(a * b, window) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, window=8, peak=1.0):
    """Mean SSIM with a uniform window, averaged over channels and batch.

    Accepts 2-D planes or (..., h, w) stacks.
    """
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    if a.shape[-1] < window or a.shape[-2] < window:
        raise ValueError(f"ssim: image {a.shape[-2]}x{a.shape[-1]} smaller than window {window}")
    planes_a = a.reshape(-1, *a.shape[-2:])
    planes_b = b.reshape(-1, *b.shape[-2:])
    vals = [np.mean(ssim_map(pa, pb, window, peak)) for pa, pb in zip(planes_a, planes_b)]
    return float(np.mean(vals))


@dataclass
class BucketRow:
    bucket: str
    count: int = 0
    psnr_db: float = float("nan")
    ssim: float = float("nan")
    flag: str = ""


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bucket", "count", "psnr_db", "ssim"])
        for r in self.rows:
            w.writerow([r.bucket, r.count, f"{r.psnr_db:.4f}", f"{r.ssim:.6f}"])
        return buf.getvalue()

    def to_text(self):
        labels = [r.bucket for r in self.rows]
        width = max([10] + [len(lbl) for lbl in labels]) + 2
        head = "Metric".ljust(8) + "".join(lbl.rjust(width) for lbl in labels)
        psnr_line = "PSNR".ljust(8) + "".join(f"{r.psnr_db:.2f}".rjust(width) for r in self.rows)
        ssim_line = "SSIM".ljust(8) + "".join(f"{r.ssim:.4f}".rjust(width) for r in self.rows)
        count_line = "count".ljust(8) + "".join(str(r.count).rjust(width) for r in self.rows)
        lines = [head, psnr_line, ssim_line, count_line]
        for r in self.rows:
            if r.flag:
                lines.append(f"! {r.bucket}: {r.flag}")
        return "\n".join(lines) + "\n"


def evaluate(model_fn, dataset, buckets=BUCKETS, composite_output=True):
    """Score ``model_fn(damaged, mask) -> raw output`` on bucketed samples.

    ``dataset`` maps each bucket to a list of :class:`InpaintSample`; a
    missing or empty bucket yields a flagged row. Samples are scored in list
    order.
    """
    report = EvalReport()
    for b in buckets:
        samples = dataset.get(b, []) if isinstance(dataset, dict) else dataset(b)
        row = BucketRow(b.label)
        if not samples:
            row.flag = "no samples"
            report.rows.append(row)
            continue
        ps, ss = [], []
        for s in samples:
            raw = _arr(model_fn(s.damaged, s.mask))
            out = raw * (1 - s.mask) + s.gt * s.mask if composite_output else raw
            out = np.clip(out, 0.0, 1.0)
            ps.append(psnr(out, s.gt))
            ss.append(ssim(out, s.gt))
        row.count, row.psnr_db, row.ssim = len(samples), float(np.mean(ps)), float(np.mean(ss))
        report.rows.append(row)
    return report
