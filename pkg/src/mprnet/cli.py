"""Command-line entry points: train, infer, eval, gen-masks, grad-check."""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .checkpoint import CheckpointError
from .config import ConfigError, load_config, parse_value
from .data import (BUCKETS, InpaintSample, bucket_of, generate_bucket_mask, list_pngs, load_image,
                   load_mask, parse_bucket, save_image, save_mask)

log = logging.getLogger("mprnet")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def env_seed(default=0):
    raw = os.environ.get("MPR_SEED", "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"MPR_SEED must be an integer, got {raw!r}") from None


def _parse_overrides(pairs):
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise CliError(f"--set expects key=value, got {pair!r}")
        key, val = pair.split("=", 1)
        out[key.strip()] = parse_value(val)
    return out


def cmd_train(args):
    from .train import train

    cfg = load_config(args.config, _parse_overrides(args.set))
    if args.out_dir:
        cfg["out_dir"] = os.path.abspath(args.out_dir)
    rows, _ = train(cfg)
    final = os.path.join(cfg["out_dir"], "final.mprn")
    if rows:
        print(f"trained {len(rows)} iterations; final l_joint {rows[-1][-1]:.6f}; checkpoint {final}")
    else:
        print(f"no iterations run; checkpoint {final}")


def _restore(path):
    from .train import restore_model

    if not os.path.isfile(path):
        raise CliError(f"checkpoint not found: {path}")
    model, _ = restore_model(path, precision="float64")
    return model


def cmd_infer(args):
    from .model import composite

    model = _restore(args.checkpoint)
    image = load_image(args.image)
    mask = load_mask(args.mask)
    if mask.shape[2:] != image.shape[2:]:
        raise CliError(f"mask is {mask.shape[2]}x{mask.shape[3]} but image is {image.shape[2]}x{image.shape[3]}")
    raw = model(image * mask, mask).data
    out = raw if args.no_composite else composite(raw, image, mask)
    save_image(out, args.out)
    print(f"wrote {args.out}")


def eval_samples(data_dir, bucket, size=None):
    """Pair ``masks/<bucket dir>/*.png`` with ``images/*.png`` in sorted order, cycling images."""
    images = list_pngs(os.path.join(data_dir, "images"))
    if not images:
        raise CliError(f"no PNG images in {os.path.join(data_dir, 'images')}")
    mdir = os.path.join(data_dir, "masks", bucket.dirname)
    if not os.path.isdir(mdir):
        return []
    samples = []
    for k, mpath in enumerate(list_pngs(mdir)):
        gt = load_image(images[k % len(images)], size, resize=size is not None)
        samples.append(InpaintSample(gt, load_mask(mpath, gt.shape[2:])))
    return samples


def cmd_eval(args):
    from .metrics import evaluate

    model = _restore(args.checkpoint)
    buckets = [parse_bucket(b) for b in args.buckets.split(",")] if args.buckets else list(BUCKETS)
    if not os.path.isdir(args.data):
        raise CliError(f"dataset directory not found: {args.data}")
    dataset = {b: eval_samples(args.data, b, args.size) for b in buckets}
    report = evaluate(lambda damaged, mask: model(damaged, mask).data, dataset, buckets,
                      composite_output=not args.no_composite)
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.txt"), "w") as fh:
            fh.write(text)
        with open(os.path.join(args.out, "report.csv"), "w") as fh:
            fh.write(report.to_csv())


def cmd_gen_masks(args):
    seed = env_seed(args.seed)
    if args.count < 1:
        raise CliError("--count must be >= 1")
    buckets = [parse_bucket(b) for b in args.buckets.split(",")] if args.buckets else list(BUCKETS)
    written = 0
    for b in buckets:
        bdir = os.path.join(args.out, b.dirname)
        os.makedirs(bdir, exist_ok=True)
        bi = BUCKETS.index(b)
        for k in range(args.count):
            mask = generate_bucket_mask(args.size, args.size, b, [seed, bi, k])
            if bucket_of(mask) != b:
                raise RuntimeError(f"generated mask fell outside {b.label}")
            save_mask(mask, os.path.join(bdir, f"mask_{k}.png"))
            written += 1
    print(f"wrote {written} masks to {args.out}")


def cmd_grad_check(args):
    from .checks import run_suite

    reports = run_suite(args.case or None, echo=print)
    failed = [r.name for r in reports if not r.passed]
    if failed:
        raise CliError(f"gradient check failed: {', '.join(failed)}")
    print(f"all {len(reports)} gradient checks passed")


def build_parser():
    p = _Parser(prog="mprnet", description="Mask-aware recurrent inpainting network")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train from a key = value config file")
    t.add_argument("config")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    t.add_argument("--out-dir", help="override out_dir")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="inpaint one image")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--image", required=True)
    i.add_argument("--mask", required=True, help="grayscale PNG, white = known, black = hole")
    i.add_argument("--out", required=True)
    i.add_argument("--no-composite", action="store_true", help="write the raw network output")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="per-bucket PSNR / SSIM report")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True, help="directory holding images/ and masks/bucket_<lo>-<hi>/")
    e.add_argument("--buckets", help="comma-separated bucket labels, e.g. 0.01-0.1,0.1-0.2")
    e.add_argument("--size", type=int, help="resize images to this square size")
    e.add_argument("--out", help="directory for report.txt and report.csv")
    e.add_argument("--no-composite", action="store_true")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gen-masks", help="write synthetic masks per hole-ratio bucket")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=10, help="masks per bucket")
    g.add_argument("--seed", type=int, default=0, help="overridden by MPR_SEED")
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--buckets", help="comma-separated subset of buckets")
    g.set_defaults(func=cmd_gen_masks)

    c = sub.add_parser("grad-check", help="finite-difference gradient suite")
    c.add_argument("--case", action="append", help="run only this case (repeatable)")
    c.set_defaults(func=cmd_grad_check)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(message)s", stream=sys.stderr)
        args.func(args)
    except (CliError, ConfigError, CheckpointError, ValueError, KeyError, RuntimeError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"mprnet: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
