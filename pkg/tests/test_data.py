import numpy as np
import pytest
from PIL import Image

from mprnet.checkpoint import CheckpointError, apply_to, decode, encode, load_checkpoint, save_checkpoint
from mprnet.data import (BUCKETS, InpaintSample, PairedDataset, bucket_of, generate_bucket_mask,
                         generate_mask, hole_ratio, load_image, load_mask, parse_bucket, save_image,
                         save_mask, to_bytes)
from mprnet.model import ModelConfig, MprNet


def test_image_round_trip_on_8bit_grid(tmp_path):
    x = np.random.default_rng(0).integers(0, 256, size=(1, 3, 8, 6)) / 255.0
    save_image(x, str(tmp_path / "a.png"))
    assert np.array_equal(load_image(str(tmp_path / "a.png")), x)


def test_half_rounds_up():
    assert to_bytes(np.array([0.5]))[0] == 128
    assert to_bytes(np.array([-0.1, 1.2])).tolist() == [0, 255]


def test_resize_and_size_check(tmp_path):
    p = str(tmp_path / "big.png")
    Image.fromarray(np.zeros((512, 512, 3), np.uint8)).save(p)
    assert load_image(p, 256, resize=True).shape == (1, 3, 256, 256)
    with pytest.raises(ValueError, match="expected 256x256"):
        load_image(p, 256)


def test_image_errors(tmp_path):
    gray = str(tmp_path / "g.png")
    Image.fromarray(np.zeros((4, 4), np.uint8)).save(gray)
    with pytest.raises(ValueError, match="RGB"):
        load_image(gray)
    junk = tmp_path / "junk.png"
    junk.write_bytes(b"not a png")
    with pytest.raises(ValueError, match="cannot read"):
        load_image(str(junk))


def test_mask_threshold_and_round_trip(tmp_path):
    p = str(tmp_path / "m.png")
    Image.fromarray(np.array([[0, 127], [128, 255]], np.uint8)).save(p)
    assert load_mask(p)[0, 0].tolist() == [[0.0, 0.0], [1.0, 1.0]]
    m = generate_mask(16, 16, 0.2, seed=1)
    save_mask(m, str(tmp_path / "g.png"))
    assert np.array_equal(load_mask(str(tmp_path / "g.png")), m)


@pytest.mark.parametrize("target", [0.05, 0.15, 0.25, 0.35])
def test_mask_ratio_accuracy_100_trials(target):
    for seed in range(100):
        m = generate_mask(64, 64, target, seed=seed)
        assert abs(hole_ratio(m) - target) <= 0.02
        assert set(np.unique(m)) <= {0.0, 1.0}


def test_mask_examples():
    m = generate_mask(64, 64, 0.15, seed=42)
    assert 0.13 <= hole_ratio(m) <= 0.17 and bucket_of(m) == BUCKETS[1]
    assert np.array_equal(m, generate_mask(64, 64, 0.15, seed=42))
    assert bucket_of(generate_mask(64, 64, 0.05, seed=3)) == BUCKETS[0]
    with pytest.raises(ValueError):
        generate_mask(8, 8, 0.95, seed=0)
    with pytest.raises(RuntimeError):
        generate_mask(8, 8, 0.5, seed=0, max_attempts=1)


def test_bucket_examples():
    assert bucket_of(0.1) == BUCKETS[0]
    assert bucket_of(0.15) == BUCKETS[1]
    assert bucket_of(0.45) is None and bucket_of(0.01) is None
    assert [b.label for b in BUCKETS] == ["(0.01-0.1]", "(0.1-0.2]", "(0.2-0.3]", "(0.3-0.4]"]
    assert parse_bucket("0.2-0.3") == BUCKETS[2] and parse_bucket("bucket_0.3-0.4") == BUCKETS[3]
    with pytest.raises(ValueError):
        parse_bucket("0.5-0.6")


def test_buckets_partition():
    for r in np.linspace(0.0101, 0.4, 400):
        assert sum(b.contains(r) for b in BUCKETS) == 1


def test_bucket_masks_land_in_bucket():
    for b in BUCKETS:
        for k in range(5):
            assert bucket_of(generate_bucket_mask(64, 64, b, [1, k])) == b


def test_damaged_image_zero_in_holes():
    gt = np.random.default_rng(1).uniform(0.1, 1.0, size=(1, 3, 32, 32))
    m = generate_mask(32, 32, 0.3, seed=2)
    s = InpaintSample(gt, m)
    assert np.all(s.damaged[:, :, m[0, 0] == 0] == 0)
    assert np.array_equal(s.damaged[:, :, m[0, 0] == 1], gt[:, :, m[0, 0] == 1])


def test_paired_dataset(image_dir, tmp_path):
    md = tmp_path / "masks"
    md.mkdir()
    save_mask(generate_mask(64, 64, 0.2, seed=0), str(md / "a.png"))
    ds = PairedDataset(str(image_dir), str(md), 64)
    assert len(ds) == 2 and np.array_equal(ds[0].mask, ds[1].mask)
    with pytest.raises(FileNotFoundError):
        PairedDataset(str(tmp_path / "none"), str(md))


def test_checkpoint_round_trip_bit_exact(tmp_path):
    net = MprNet(ModelConfig(channels=4, seed=2))
    path = str(tmp_path / "m.mprn")
    save_checkpoint(net.state_dict(), path)
    other = MprNet(ModelConfig(channels=4, seed=3))
    apply_to(other, load_checkpoint(path))
    for (n1, p1), (n2, p2) in zip(net.named_parameters(), other.named_parameters()):
        assert n1 == n2 and np.array_equal(p1.data, p2.data)


def test_checkpoint_detects_corruption():
    blob = encode({"a": np.arange(6, dtype=np.float32).reshape(2, 3)})
    assert np.array_equal(decode(blob)["a"], np.arange(6).reshape(2, 3))
    flipped = bytearray(blob)
    flipped[-6] ^= 0x01
    with pytest.raises(CheckpointError, match="CRC"):
        decode(bytes(flipped))
    with pytest.raises(CheckpointError):
        decode(blob[:-9])
    with pytest.raises(CheckpointError, match="magic"):
        decode(b"XXXX" + blob[4:])
    bumped = bytearray(blob)
    bumped[4] = 2
    with pytest.raises(CheckpointError, match="version"):
        decode(bytes(bumped))


def test_checkpoint_missing_name_is_total(tmp_path):
    small = MprNet(ModelConfig(channels=4, seed=0))
    entries = dict(small.state_dict())
    entries.pop("gff.alpha")
    big = MprNet(ModelConfig(channels=4, seed=1))
    before = {n: p.data.copy() for n, p in big.named_parameters()}
    with pytest.raises(CheckpointError, match="gff.alpha"):
        apply_to(big, entries)
    for n, p in big.named_parameters():
        assert np.array_equal(p.data, before[n])


def test_checkpoint_shape_mismatch():
    with pytest.raises(CheckpointError, match="shape"):
        apply_to(MprNet(ModelConfig(channels=8)), MprNet(ModelConfig(channels=4)).state_dict())
