import os

import pytest

from mprnet.config import DEFAULTS, ConfigError, load_config, parse_config, parse_value


def test_parse_value_types():
    assert parse_value("true") is True and parse_value("off") is False
    assert parse_value("3") == 3 and parse_value("1e-4") == 1e-4
    assert parse_value("1, 3, 5") == (1, 3, 5)
    assert parse_value("'a,b'") == "a,b"
    assert parse_value("runs/x") == "runs/x"


def test_sections_and_comments():
    out = parse_config("# top\nseed = 3\n[train]\nlr = 0.001  # inline\n[data]\nmasks = m\n")
    assert out == {"seed": 3, "train.lr": 0.001, "data.masks": "m"}
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("no equals sign")


def test_load_defaults_and_unknown_keys(tmp_path, monkeypatch):
    monkeypatch.delenv("MPR_SEED", raising=False)
    cfg = load_config()
    assert cfg["loss.style"] == 180.0 and cfg["train.lr"] == DEFAULTS["train.lr"]
    p = tmp_path / "c.cfg"
    p.write_text("bogus = 1\n")
    with pytest.raises(ConfigError, match="bogus"):
        load_config(str(p))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.cfg"))


def test_relative_paths_resolve_against_config(tmp_path, monkeypatch):
    monkeypatch.delenv("MPR_SEED", raising=False)
    p = tmp_path / "c.cfg"
    p.write_text("out_dir = out\n[data]\nimages = imgs\n")
    cfg = load_config(str(p))
    assert cfg["out_dir"] == os.path.join(str(tmp_path), "out")
    assert cfg["data.images"] == os.path.join(str(tmp_path), "imgs")
    assert cfg["data.masks"] == ""


def test_overrides_and_env_seed(tmp_path, monkeypatch):
    p = tmp_path / "c.cfg"
    p.write_text("seed = 1\n")
    monkeypatch.delenv("MPR_SEED", raising=False)
    assert load_config(str(p), {"seed": 2})["seed"] == 2
    monkeypatch.setenv("MPR_SEED", "9")
    assert load_config(str(p), {"seed": 2})["seed"] == 9
    monkeypatch.setenv("MPR_SEED", "x")
    with pytest.raises(ConfigError, match="MPR_SEED"):
        load_config(str(p))


@pytest.mark.parametrize("override", [{"train.lr": 0.0}, {"channels": 0}, {"train.iterations": -1},
                                      {"precision": "float16"}, {"data.image_size": 30}])
def test_validation(override, monkeypatch):
    monkeypatch.delenv("MPR_SEED", raising=False)
    with pytest.raises(ConfigError):
        load_config(None, override)
