import numpy as np
import pytest

from mprnet.data import save_image


def toy_image(h=64, w=64):
    """Smooth deterministic RGB test image in [0, 1]."""
    yy, xx = np.mgrid[0:h, 0:w] / h
    r = 0.5 + 0.4 * np.sin(2 * np.pi * xx * 1.5) * np.cos(2 * np.pi * yy)
    g = 0.3 + 0.5 * yy
    b = 0.6 - 0.4 * xx + 0.2 * (((xx - 0.5) ** 2 + (yy - 0.5) ** 2) < 0.08)
    return np.clip(np.stack([r, g, b])[None], 0.0, 1.0)


@pytest.fixture
def image64():
    return toy_image()


@pytest.fixture
def image_dir(tmp_path):
    d = tmp_path / "images"
    d.mkdir()
    base = toy_image()
    for i in range(2):
        save_image(np.clip(base * (1.0 - 0.2 * i), 0, 1), str(d / f"img{i}.png"))
    return d
