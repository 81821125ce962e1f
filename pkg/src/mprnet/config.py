"""Plain-text ``key = value`` configuration.

Lines starting with ``#`` are comments. ``[section]`` headers prefix the
keys that follow with ``section.``; dotted keys work without headers too.
Values parse as bool (true/false), int, float, comma-separated tuple, or
string, in that order.
"""
from __future__ import annotations

import os

DEFAULTS = {
    "seed": 0,
    "precision": "float32",
    "out_dir": "runs",
    "channels": 32,
    "sfr_iterations": 4,
    "tfr_iterations": 4,
    "tfr_window": 16,
    "sfr_dilation": 2,
    "weight_tied": True,
    "se_reduction": 4,
    "mfa_dilations": (1, 3, 5, 7),
    "loss.hole": 6.0,
    "loss.valid": 1.0,
    "loss.perceptual": 0.1,
    "loss.style": 180.0,
    "pyramid.seed": 1234,
    "pyramid.weights_path": "",
    "train.iterations": 1000,
    "train.lr": 1e-4,
    "train.finetune_lr": 5e-5,
    "train.finetune_from": 0,
    "train.batch_size": 1,
    "train.checkpoint_every": 0,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.resume": "",
    "data.images": "images",
    "data.masks": "",
    "data.image_size": 64,
    "data.resize": False,
    "data.mask_ratio": 0.15,
}

PATH_KEYS = ("out_dir", "pyramid.weights_path", "train.resume", "data.images", "data.masks")


class ConfigError(ValueError):
    pass


def parse_value(text):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if "," in text:
        return tuple(parse_value(p) for p in text.split(",") if p.strip())
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config(text):
    out = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[f"{section}.{key}" if section else key] = parse_value(val)
    return out


def load_config(path=None, overrides=None):
    """Defaults, then the file, then ``overrides``; ``MPR_SEED`` wins over all.

    Relative paths resolve against the config file's directory.
    """
    cfg = dict(DEFAULTS)
    base = os.getcwd()
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        user = parse_config(text)
        unknown = sorted(set(user) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(user)
        base = os.path.dirname(os.path.abspath(path))
    if overrides:
        cfg.update(overrides)
    if os.environ.get("MPR_SEED", "").strip():
        try:
            cfg["seed"] = int(os.environ["MPR_SEED"])
        except ValueError as exc:
            raise ConfigError(f"MPR_SEED must be an integer, got {os.environ['MPR_SEED']!r}") from exc
    for key in PATH_KEYS:
        if cfg[key] and not os.path.isabs(str(cfg[key])):
            cfg[key] = os.path.join(base, str(cfg[key]))
    if isinstance(cfg["mfa_dilations"], int):
        cfg["mfa_dilations"] = (cfg["mfa_dilations"],)
    _validate(cfg)
    return cfg


def _validate(cfg):
    for key in ("train.lr", "train.finetune_lr"):
        if not float(cfg[key]) > 0:
            raise ConfigError(f"{key} must be positive")
    for key in ("sfr_iterations", "tfr_iterations", "channels", "train.batch_size"):
        if int(cfg[key]) < 1:
            raise ConfigError(f"{key} must be >= 1")
    if int(cfg["train.iterations"]) < 0:
        raise ConfigError("train.iterations must be >= 0")
    if cfg["precision"] not in ("float32", "float64"):
        raise ConfigError("precision must be float32 or float64")
    if int(cfg["data.image_size"]) % 4:
        raise ConfigError("data.image_size must be divisible by 4")
