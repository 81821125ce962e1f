"""Knowledge-consistent attention: pixel-level cosine attention whose score
maps are blended across consecutive recurrences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Conv2d, Module
from .tensor import Tensor, as_tensor, concat_channels, l2_normalize, sigmoid, softmax

ROW_SUM_TOL = 1e-5


def cosine_similarity(a, b):
    """Cosine of the angle between two channel vectors; 0 if either has zero norm."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"cosine_similarity: length mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass
class AttentionState:
    """Score maps and validity mask carried from the previous recurrence."""

    prev_scores: Tensor | None = None  # (n, targets, sources)
    prev_valid: np.ndarray | None = None  # (n, 1, h, w)

    @property
    def empty(self):
        return self.prev_scores is None


def similarity_matrix(f):
    """All-pairs cosine similarity between positions of ``f`` -> (n, hw, hw)."""
    f = as_tensor(f)
    n, c, h, w = f.shape
    unit = l2_normalize(f.reshape(n, c, h * w), axis=1).transpose(0, 2, 1)
    return unit @ unit.transpose(0, 2, 1)


def window_mask(h, w, size):
    """Boolean (hw, hw) matrix: source inside the ``size`` x ``size`` window of the target.

    The window spans offsets ``-size // 2 .. (size - 1) // 2`` on each axis.
    """
    ys, xs = np.divmod(np.arange(h * w), w)
    dy = ys[None, :] - ys[:, None]
    dx = xs[None, :] - xs[:, None]
    lo, hi = -(size // 2), (size - 1) // 2
    return (dy >= lo) & (dy <= hi) & (dx >= lo) & (dx <= hi)


def allowed_sources(valid, window=None):
    """(n, targets, sources) boolean of permitted score entries.

    Sources must be valid; with a window they must also fall inside the
    target's window. Targets whose window holds no valid source fall back to
    every valid source so each row stays a distribution.
    """
    n = valid.shape[0]
    src = valid.reshape(n, 1, -1).astype(bool)
    if not np.all(src.any(axis=-1)):
        raise ValueError("attention needs at least one valid source position")
    if window is None:
        return np.broadcast_to(src, (n, src.shape[-1], src.shape[-1]))
    allowed = src & window[None]
    empty = ~allowed.any(axis=-1, keepdims=True)
    return np.where(empty, src, allowed)


def attention_scores(sims, allowed, state, lam):
    """Softmax scores for this recurrence, blended with the previous ones.

    Rows whose target was valid in the previous recurrence become
    ``lam * current + (1 - lam) * previous``; other rows keep the current
    softmax. Returns ``(scores, current)``.
    """
    sims = as_tensor(sims)
    current = softmax(sims, axis=-1, valid=allowed)
    if state is None or state.empty:
        scores = current
    else:
        if state.prev_scores.shape != sims.shape:
            raise ValueError(f"attention state {state.prev_scores.shape} does not match scores {sims.shape}")
        n, t, _ = sims.shape
        rows = state.prev_valid.reshape(n, t, 1).astype(sims.dtype)
        keep = 1.0 - (lam if isinstance(lam, Tensor) else float(lam))
        if isinstance(keep, Tensor):
            keep = keep.reshape(1, 1, 1)
        scores = current + (as_tensor(state.prev_scores) - current) * keep * rows
    sums = scores.data.sum(axis=-1)
    if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
        raise RuntimeError(f"attention rows not normalised (max deviation {np.max(np.abs(sums - 1.0)):.2e})")
    return scores, current


def reconstruct_features(f, scores):
    """Each position becomes the score-weighted sum of source channel vectors."""
    f = as_tensor(f)
    n, c, h, w = f.shape
    flat = f.reshape(n, c, h * w).transpose(0, 2, 1)
    return (as_tensor(scores) @ flat).transpose(0, 2, 1).reshape(n, c, h, w)


@dataclass
class AttentionRecord:
    scores: np.ndarray
    current: np.ndarray
    allowed: np.ndarray
    features: np.ndarray  # input feature map the scores were computed from
    valid: np.ndarray


class KnowledgeConsistentAttention(Module):
    """Attention block: scores, reconstruction, and 1x1 fusion with the input."""

    def __init__(self, ctx, name, channels, window=None, detach_history=False):
        self.window = window
        # True stops gradients at the previous recurrence's scores
        self.detach_history = detach_history
        self.fuse = Conv2d(ctx, f"{name}.fuse", 2 * channels, channels, k=1)
        # sigmoid(0) = 0.5
        self.lam_raw = ctx.const(f"{name}.lambda", (1,), 0.0)
        self._window_cache = {}

    def lam(self):
        return sigmoid(self.lam_raw)

    def _window(self, h, w):
        if self.window is None:
            return None
        key = (h, w)
        if key not in self._window_cache:
            self._window_cache[key] = window_mask(h, w, self.window)
        return self._window_cache[key]

    def __call__(self, f, valid, state):
        f = as_tensor(f)
        n, c, h, w = f.shape
        allowed = allowed_sources(valid, self._window(h, w))
        scores, current = attention_scores(similarity_matrix(f), allowed, state, self.lam())
        fhat = reconstruct_features(f, scores)
        out = self.fuse(concat_channels(fhat, f)) * valid.astype(f.dtype)
        record = AttentionRecord(scores.data, current.data, allowed, f.data, valid)
        carried = scores.detach() if self.detach_history else scores
        return out, AttentionState(carried, valid.copy()), record
