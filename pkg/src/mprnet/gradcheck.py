"""Central finite-difference checks of analytic gradients.

Piecewise-linear ops (rectifiers, absolute value) are handled by recording
their branch pattern at the sample point and replaying it during the
perturbed evaluations. The differences then measure the derivative of the
smooth piece that contains the sample point, which is what backprop
computes, instead of averaging across a kink that a perturbation of size
``h`` happens to straddle. Only forward evaluations are involved.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, branch_tape, no_grad

KINK_MARGIN = 1e-4


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    passed: bool
    n_checked: int
    worst: str = ""
    resamples: int = 0
    kink_crossings: int = 0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f", {self.kink_crossings} stencils crossed a kink" if self.kink_crossings else ""
        text = (f"[{status}] {self.name}: max rel err {self.max_rel_error:.3e} "
                f"over {self.n_checked} entries{extra}")
        return text + (f" ({self.worst})" if self.worst else "")


def rel_error(a, n, floor=1e-6):
    """``|a - n| / max(|a|, |n|, floor)``."""
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(fn, inputs, *, params=(), name="op", tol=1e-3, h=1e-3, seed=0,
               max_entries=None, floor=1e-6, max_resample=5, low=-1.0, high=1.0,
               replay_branches=True):
    """Compare analytic gradients of ``fn`` against central differences.

    ``inputs`` holds shapes (drawn uniformly in [low, high] from ``seed``) or
    arrays. ``fn(*tensors)`` may return any tensor; non-scalar outputs are
    reduced with a fixed random projection. Every input and every Parameter
    in ``params`` is checked (at most ``max_entries`` sampled entries each).
    Drawn inputs are redrawn while any kink input lies within
    ``KINK_MARGIN`` of zero.
    """
    params = list(params)
    resamples = 0
    redrawable = any(isinstance(spec, tuple) for spec in inputs)
    for attempt in range(max_resample + 1):
        rng = np.random.default_rng([seed, attempt])
        arrays = [
            rng.uniform(low, high, size=spec) if isinstance(spec, tuple) else np.array(spec, dtype=np.float64)
            for spec in inputs
        ]
        tensors = [Tensor(a, requires_grad=True) for a in arrays]
        with no_grad(), branch_tape("record") as probe:
            out = fn(*tensors)
        if probe.min_abs < KINK_MARGIN and redrawable and attempt < max_resample:
            resamples += 1
            continue
        break

    proj = None
    if out.size != 1:
        proj = np.random.default_rng([seed, 10_000]).uniform(-1.0, 1.0, size=out.shape).astype(out.dtype)

    def objective():
        res = fn(*tensors)
        return res.sum() if proj is None else (res * proj).sum()

    for p in params:
        p.zero_grad()
    with branch_tape("record") as tape:
        loss = objective()
    loss.backward()
    patterns = tape.patterns

    def evaluate():
        if not replay_branches:
            return objective().item()
        with branch_tape("replay", patterns) as rt:
            val = objective().item()
        evaluate.flips += rt.flips > 0
        return val

    evaluate.flips = 0
    targets = [(f"input{i}", t) for i, t in enumerate(tensors)] + [(p.name or "param", p) for p in params]
    pick_rng = np.random.default_rng([seed, 20_000])
    worst_err, worst_loc, n_checked = 0.0, "", 0
    for label, t in targets:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        if not np.all(np.isfinite(analytic)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(analytic))[0])
            return GradCheckReport(name, np.inf, False, n_checked, f"non-finite gradient at {label}{bad}", resamples)
        flat_idx = np.arange(t.size)
        if max_entries is not None and t.size > max_entries:
            flat_idx = np.sort(pick_rng.choice(t.size, size=max_entries, replace=False))
        flat = t.data.reshape(-1)
        gflat = analytic.reshape(-1)
        for k in flat_idx:
            orig = flat[k]
            with no_grad():
                flat[k] = orig + h
                fp = evaluate()
                flat[k] = orig - h
                fm = evaluate()
            flat[k] = orig
            numeric = (fp - fm) / (2 * h)
            if not np.isfinite(numeric):
                return GradCheckReport(name, np.inf, False, n_checked, f"non-finite objective at {label}[{k}]", resamples)
            err = float(rel_error(gflat[k], numeric, floor))
            n_checked += 1
            if err > worst_err:
                worst_err = err
                worst_loc = f"worst at {label}[{k}]: analytic {gflat[k]:.6e} numeric {numeric:.6e}"
    for p in params:
        p.zero_grad()
    passed = worst_err < tol
    return GradCheckReport(name, worst_err, passed, n_checked, "" if passed else worst_loc,
                           resamples, evaluate.flips)
