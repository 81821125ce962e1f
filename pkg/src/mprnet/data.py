"""Image and mask I/O, brush-stroke mask synthesis and hole-ratio buckets.

Mask convention everywhere: 1 (white, >= 128 in PNGs) is a known pixel,
0 (black) is a hole.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class MaskBucket:
    lo: float
    hi: float

    @property
    def label(self):
        return f"({self.lo:g}-{self.hi:g}]"

    @property
    def dirname(self):
        return f"bucket_{self.lo:g}-{self.hi:g}"

    def contains(self, ratio):
        return self.lo < ratio <= self.hi

    def target_range(self, margin=0.025):
        """Targets whose +-0.02 generation tolerance stays inside the bucket."""
        return self.lo + margin, self.hi - margin


BUCKETS = (MaskBucket(0.01, 0.1), MaskBucket(0.1, 0.2), MaskBucket(0.2, 0.3), MaskBucket(0.3, 0.4))


def hole_ratio(mask):
    mask = np.asarray(mask)
    return float(np.count_nonzero(mask == 0)) / mask.size


def bucket_of(mask_or_ratio):
    """Bucket holding the hole ratio, or ``None`` when it falls outside all four."""
    ratio = mask_or_ratio if np.isscalar(mask_or_ratio) else hole_ratio(mask_or_ratio)
    for b in BUCKETS:
        if b.contains(ratio):
            return b
    return None


def parse_bucket(label):
    for b in BUCKETS:
        if label in (b.label, b.dirname, f"{b.lo:g}-{b.hi:g}"):
            return b
    raise ValueError(f"unknown bucket {label!r}; expected one of {[b.label for b in BUCKETS]}")


# -- images ---------------------------------------------------------------
def load_image(path, size=None, resize=False):
    """Read an 8-bit RGB PNG as a (1, 3, h, w) float64 array in [0, 1].

    With ``size`` set, a differently sized image is resized (bilinear) when
    ``resize`` is true and rejected otherwise.
    """
    try:
        img = Image.open(path)
        img.load()
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read image {path}: {exc}") from exc
    if img.mode != "RGB":
        raise ValueError(f"image {path} has mode {img.mode}; expected 8-bit RGB")
    if size is not None:
        size = (size, size) if np.isscalar(size) else tuple(size)
        if img.size != (size[1], size[0]):
            if not resize:
                raise ValueError(f"image {path} is {img.size[1]}x{img.size[0]}, expected {size[0]}x{size[1]}")
            img = img.resize((size[1], size[0]), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)[None].copy()


def to_bytes(x):
    """Unit-range floats to uint8, rounding halves away from zero."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.floor(x * 255.0 + 0.5).astype(np.uint8)


def save_image(x, path):
    x = np.asarray(x)
    if x.ndim == 4:
        if x.shape[0] != 1:
            raise ValueError("save_image writes a single image")
        x = x[0]
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValueError(f"expected a (3, h, w) image, got {x.shape}")
    Image.fromarray(to_bytes(x).transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def load_mask(path, size=None):
    """Read a grayscale PNG mask as (1, 1, h, w) of exact 0/1 (>= 128 is valid)."""
    try:
        img = Image.open(path)
        img.load()
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read mask {path}: {exc}") from exc
    if img.mode != "L":
        img = img.convert("L")
    if size is not None:
        size = (size, size) if np.isscalar(size) else tuple(size)
        if img.size != (size[1], size[0]):
            img = img.resize((size[1], size[0]), Image.NEAREST)
    arr = (np.asarray(img) >= 128).astype(np.float64)
    return arr[None, None]


def save_mask(mask, path):
    m = np.asarray(mask).reshape(np.asarray(mask).shape[-2:])
    Image.fromarray(np.where(m > 0, 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


# -- masks ----------------------------------------------------------------
def _stamp_disc(hole, cy, cx, r):
    h, w = hole.shape
    y0, y1 = max(0, int(np.floor(cy - r))), min(h, int(np.ceil(cy + r)) + 1)
    x0, x1 = max(0, int(np.floor(cx - r))), min(w, int(np.ceil(cx + r)) + 1)
    if y0 >= y1 or x0 >= x1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    hole[y0:y1, x0:x1] |= (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _stroke(rng, h, w, scale):
    hole = np.zeros((h, w), dtype=bool)
    size = min(h, w)
    y, x = rng.uniform(0, h), rng.uniform(0, w)
    angle = rng.uniform(0, 2 * np.pi)
    radius = max(0.5, rng.uniform(0.02, 0.07) * size * scale)
    for _ in range(rng.integers(3, 10)):
        angle += rng.normal(0.0, 0.8)
        length = rng.uniform(0.05, 0.25) * size * max(scale, 0.3)
        ny = np.clip(y + length * np.sin(angle), 0, h - 1)
        nx = np.clip(x + length * np.cos(angle), 0, w - 1)
        steps = max(1, int(np.hypot(ny - y, nx - x) / 0.5))
        for t in np.linspace(0.0, 1.0, steps + 1):
            _stamp_disc(hole, y + t * (ny - y), x + t * (nx - x), radius)
        y, x = ny, nx
    return hole


def generate_mask(h, w, target_ratio, seed, tol=0.02, max_attempts=2000):
    """Random-walk brush strokes until the hole ratio is within ``tol`` of the target.

    Deterministic per seed. Returns a (1, 1, h, w) 0/1 array.
    """
    if not 0 < target_ratio < 0.9:
        raise ValueError(f"target ratio must be in (0, 0.9), got {target_ratio}")
    rng = np.random.default_rng(seed)
    hole = np.zeros((h, w), dtype=bool)
    total = h * w
    scale = 1.0
    for _ in range(max_attempts):
        ratio = hole.sum() / total
        if ratio >= target_ratio - tol / 2:
            break
        candidate = hole | _stroke(rng, h, w, scale)
        if candidate.sum() / total > target_ratio + tol:
            scale *= 0.8
            continue
        hole = candidate
    ratio = hole.sum() / total
    if abs(ratio - target_ratio) > tol:
        raise RuntimeError(f"could not reach hole ratio {target_ratio} (got {ratio:.4f}) for seed {seed}")
    return (~hole).astype(np.float64)[None, None]


def generate_bucket_mask(h, w, bucket, seed):
    """Mask whose ratio lands in ``bucket``; the target is drawn from the seed."""
    lo, hi = bucket.target_range()
    target = np.random.default_rng(list(np.atleast_1d(seed)) + [7]).uniform(lo, hi)
    return generate_mask(h, w, target, seed)


# -- samples --------------------------------------------------------------
@dataclass
class InpaintSample:
    gt: np.ndarray  # (1, 3, h, w) in [0, 1]
    mask: np.ndarray  # (1, 1, h, w), 1 = known

    @property
    def damaged(self):
        return self.gt * self.mask


def list_pngs(directory):
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"directory not found: {directory}")
    return sorted(os.path.join(directory, f) for f in os.listdir(directory) if f.lower().endswith(".png"))


class PairedDataset:
    """``images/`` and ``masks/`` directories paired by sorted filename order.

    When there are fewer masks than images, masks are reused cyclically.
    """

    def __init__(self, images_dir, masks_dir, size=None, resize=False):
        self.images = list_pngs(images_dir)
        self.masks = list_pngs(masks_dir)
        if not self.images:
            raise ValueError(f"no PNG images in {images_dir}")
        if not self.masks:
            raise ValueError(f"no PNG masks in {masks_dir}")
        self.size, self.resize = size, resize
        self._cache = {}

    def __len__(self):
        return len(self.images)

    def __getitem__(self, i):
        if i not in self._cache:
            gt = load_image(self.images[i], self.size, self.resize)
            mask = load_mask(self.masks[i % len(self.masks)], gt.shape[2:])
            self._cache[i] = InpaintSample(gt, mask)
        return self._cache[i]
