"""Training loop, checkpoint assembly and model restoration."""
from __future__ import annotations

import csv
import logging
import os

import numpy as np

from . import checkpoint as ckpt
from .data import InpaintSample, PairedDataset, generate_mask, list_pngs, load_image
from .losses import FeaturePyramid, LossWeights, joint_loss
from .model import ModelConfig, MprNet
from .optim import Adam

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iteration", "l_hole", "l_valid", "l_perceptual", "l_style", "l_joint")


def model_config_from(cfg):
    return ModelConfig(
        channels=int(cfg["channels"]),
        sfr_iterations=int(cfg["sfr_iterations"]),
        tfr_iterations=int(cfg["tfr_iterations"]),
        tfr_window=int(cfg["tfr_window"]),
        sfr_dilation=int(cfg["sfr_dilation"]),
        weight_tied=bool(cfg["weight_tied"]),
        se_reduction=int(cfg["se_reduction"]),
        mfa_dilations=tuple(cfg["mfa_dilations"]),
        seed=int(cfg["seed"]),
        precision=cfg["precision"],
    )


def loss_weights_from(cfg):
    return LossWeights(float(cfg["loss.hole"]), float(cfg["loss.valid"]),
                       float(cfg["loss.perceptual"]), float(cfg["loss.style"]))


def pyramid_from(cfg, dtype):
    weights = None
    if cfg["pyramid.weights_path"]:
        weights = ckpt.load_checkpoint(cfg["pyramid.weights_path"])
    return FeaturePyramid(seed=int(cfg["pyramid.seed"]), dtype=dtype, weights=weights)


class SyntheticMaskDataset:
    """Images from a directory, each paired with one fixed generated mask."""

    def __init__(self, images_dir, ratio, seed, size=None, resize=False):
        self.images = list_pngs(images_dir)
        if not self.images:
            raise ValueError(f"no PNG images in {images_dir}")
        self.ratio, self.seed, self.size, self.resize = ratio, seed, size, resize
        self._cache = {}

    def __len__(self):
        return len(self.images)

    def __getitem__(self, i):
        if i not in self._cache:
            gt = load_image(self.images[i], self.size, self.resize)
            mask = generate_mask(gt.shape[2], gt.shape[3], self.ratio, seed=[self.seed, i])
            self._cache[i] = InpaintSample(gt, mask)
        return self._cache[i]


def dataset_from(cfg):
    size = int(cfg["data.image_size"])
    if cfg["data.masks"]:
        return PairedDataset(cfg["data.images"], cfg["data.masks"], size, bool(cfg["data.resize"]))
    return SyntheticMaskDataset(cfg["data.images"], float(cfg["data.mask_ratio"]), int(cfg["seed"]),
                                size, bool(cfg["data.resize"]))


def checkpoint_entries(model, optimizer=None, iteration=0):
    entries = dict(model.state_dict())
    entries.update(model.cfg.meta())
    if optimizer is not None:
        entries.update(optimizer.state())
    entries["train.iteration"] = np.array([float(iteration)], dtype=np.float32)
    return entries


def restore_model(path, **overrides):
    """Rebuild a model from the architecture stored in a checkpoint."""
    entries = ckpt.load_checkpoint(path)
    cfg = ModelConfig.from_meta(entries, **overrides)
    model = MprNet(cfg)
    ckpt.apply_to(model, entries)
    return model, entries


def batch_indices(seed, iteration, n_items, batch_size):
    # stateless per-iteration draw keeps resumed runs on the same sequence
    rng = np.random.default_rng([seed, iteration, 99])
    return rng.integers(0, n_items, size=batch_size)


def train(cfg, dataset=None, on_iteration=None):
    """Run the configured schedule; returns the list of logged loss rows."""
    mcfg = model_config_from(cfg)
    model = MprNet(mcfg)
    dtype = mcfg.dtype
    pyramid = pyramid_from(cfg, dtype)
    weights = loss_weights_from(cfg)
    dataset = dataset if dataset is not None else dataset_from(cfg)
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    opt = Adam(model.named_parameters(), lr=float(cfg["train.lr"]), b1=float(cfg["train.beta1"]),
               b2=float(cfg["train.beta2"]), eps=float(cfg["train.eps"]))

    start = 0
    if cfg["train.resume"]:
        entries = ckpt.load_checkpoint(cfg["train.resume"])
        ckpt.apply_to(model, entries)
        if not opt.load_state(entries):
            raise ckpt.CheckpointError("resume checkpoint carries no optimizer state")
        start = int(entries["train.iteration"].reshape(-1)[0])

    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, "loss_log.csv")
    total_its = int(cfg["train.iterations"])
    every = int(cfg["train.checkpoint_every"])
    finetune_from = int(cfg["train.finetune_from"])
    seed = int(cfg["seed"])
    rows = []

    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        if start == 0:
            ckpt.save_checkpoint(checkpoint_entries(model, opt, 0), os.path.join(out_dir, "init.mprn"))
        for it in range(start + 1, total_its + 1):
            opt.lr = float(cfg["train.finetune_lr"]) if finetune_from and it > finetune_from else float(cfg["train.lr"])
            idx = batch_indices(seed, it, len(dataset), int(cfg["train.batch_size"]))
            samples = [dataset[int(i)] for i in idx]
            gt = np.concatenate([s.gt for s in samples]).astype(dtype)
            mask = np.concatenate([s.mask for s in samples]).astype(dtype)
            out = model(gt * mask, mask)
            total, parts = joint_loss(InpaintSample(gt, mask), out, weights, pyramid)
            opt.zero_grad()
            total.backward()
            opt.step()
            row = [it] + [parts[k] for k in LOG_COLUMNS[1:]]
            writer.writerow([it] + [repr(v) for v in row[1:]])
            fh.flush()
            rows.append(row)
            if on_iteration is not None:
                on_iteration(it, parts, model)
            if it % 50 == 0 or it == total_its:
                log.info("iteration %d: joint %.5f hole %.5f", it, parts["l_joint"], parts["l_hole"])
            if every and it % every == 0:
                ckpt.save_checkpoint(checkpoint_entries(model, opt, it), os.path.join(out_dir, f"ckpt_{it:06d}.mprn"))
    ckpt.save_checkpoint(checkpoint_entries(model, opt, max(start, total_its)), os.path.join(out_dir, "final.mprn"))
    return rows, model
