import filecmp

import numpy as np
import pytest

from naturamap.dataset import (AugmentConfig, TENSOR_FILES, augment, bin_weights,
                               compute_sample_weights, generate_dataset,
                               load_manifest, load_split, read_sample)
from naturamap.errors import ConfigError, ShapeError
from naturamap.synth import center_crop, generate_sample
from conftest import tiny_params


def test_generate_counts_and_layout(tmp_path):
    m = generate_dataset(tiny_params(), 2, 1, 1, tmp_path / "d")
    assert m.counts() == {"train": 2, "val": 1, "test": 1}
    dirs = sorted((tmp_path / "d").glob("*/sample_*"))
    assert len(dirs) == 4
    for d in dirs:
        for f in TENSOR_FILES + ("meta.txt",):
            assert (d / f).is_file(), f"{d} missing {f}"
    ids = [sid for split in m.splits.values() for sid in split]
    assert len(set(ids)) == len(ids)  # unique across splits


def test_regeneration_bitwise_identical(tmp_path):
    p = tiny_params(seed=21)
    generate_dataset(p, 2, 1, 0, tmp_path / "a")
    generate_dataset(p, 2, 1, 0, tmp_path / "b")
    ma = (tmp_path / "a" / "manifest.txt").read_bytes()
    mb = (tmp_path / "b" / "manifest.txt").read_bytes()
    assert ma == mb
    for rel in sorted(f.relative_to(tmp_path / "a")
                      for f in (tmp_path / "a").rglob("*.ntsr")):
        assert filecmp.cmp(tmp_path / "a" / rel, tmp_path / "b" / rel,
                           shallow=False), rel


def test_empty_dataset_valid(tmp_path):
    m = generate_dataset(tiny_params(), 0, 0, 0, tmp_path / "d")
    assert m.counts() == {"train": 0, "val": 0, "test": 0}
    back = load_manifest(tmp_path / "d")
    assert back.counts() == m.counts()
    assert back.params == m.params


def test_refuses_non_empty_root(tmp_path):
    root = tmp_path / "d"
    root.mkdir()
    (root / "junk").write_text("x")
    with pytest.raises(ConfigError):
        generate_dataset(tiny_params(), 1, 0, 0, root)
    generate_dataset(tiny_params(), 1, 0, 0, root, overwrite=True)


def test_manifest_round_trip(tmp_path):
    p = tiny_params(seed=33, water_threshold=0.9)
    m = generate_dataset(p, 1, 1, 1, tmp_path / "d")
    back = load_manifest(tmp_path / "d")
    assert back.params == p
    assert back.splits == m.splits


def test_sample_file_round_trip(tmp_path):
    m = generate_dataset(tiny_params(seed=4), 1, 0, 0, tmp_path / "d")
    s0 = generate_sample(m.params, 0)
    back = read_sample(m.sample_dir("train", m.splits["train"][0]))
    for f in ("patch", "context", "geo", "target", "water_mask"):
        assert np.array_equal(getattr(back, f), getattr(s0, f)), f
    assert back.center == s0.center and back.sample_seed == 0


# ---------------------------------------------------------------------------
# center crop
# ---------------------------------------------------------------------------

def test_center_crop_identity():
    t = np.arange(16, dtype=np.float32).reshape(4, 4)
    assert np.array_equal(center_crop(t, 4), t)


def test_center_crop_middle():
    t = np.arange(16, dtype=np.float32).reshape(4, 4)
    assert np.array_equal(center_crop(t, 2), t[1:3, 1:3])


def test_center_crop_offset_96():
    t = np.zeros((256, 256), dtype=np.float32)
    t[96, 96] = 1.0
    assert center_crop(t, 64)[0, 0] == 1.0


def test_center_crop_rounds_down():
    t = np.arange(25, dtype=np.float32).reshape(5, 5)
    assert np.array_equal(center_crop(t, 2), t[1:3, 1:3])


def test_center_crop_too_big():
    with pytest.raises(ShapeError):
        center_crop(np.zeros((4, 4), dtype=np.float32), 5)


# ---------------------------------------------------------------------------
# sample weights
# ---------------------------------------------------------------------------

def test_weights_single_bin_uniform():
    w = bin_weights([0.51, 0.52, 0.53])
    assert np.allclose(w, 1 / 3)


def test_weights_inverse_frequency():
    # three samples land in one bin, one in another: (1/6, 1/6, 1/6, 1/2)
    w = bin_weights([0.11, 0.12, 0.13, 0.71])
    assert np.allclose(w, [1 / 6, 1 / 6, 1 / 6, 1 / 2])


def test_weights_singleton_and_empty():
    assert np.allclose(bin_weights([0.4]), [1.0])
    assert bin_weights([]).size == 0


def test_weights_edge_bin():
    w = bin_weights([1.0, 0.95])  # mean of exactly 1.0 falls in the last bin
    assert np.allclose(w, [0.5, 0.5])


def test_compute_sample_weights_matches_file_means(tiny_dataset):
    w = compute_sample_weights(tiny_dataset, "train")
    means = [float(s.target.mean()) for s in load_split(tiny_dataset, "train")]
    assert np.allclose(w, bin_weights(means))
    assert abs(w.sum() - 1.0) < 1e-12
    assert compute_sample_weights(tiny_dataset, "test").size == 2


def test_weighted_draw_frequency_within_3_se(rng):
    w = bin_weights([0.1, 0.12, 0.3, 0.9])
    n = 100_000
    draws = rng.choice(len(w), size=n, p=w)
    freq = np.bincount(draws, minlength=len(w)) / n
    se = np.sqrt(w * (1 - w) / n)
    assert np.all(np.abs(freq - w) <= 3 * se)


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

def _marker_sample():
    s = generate_sample(tiny_params(seed=8), 0)
    s.patch[0, 0, :] = 9.0
    s.target[0, 0] = 9.0
    s.water_mask[0, 0] = 9.0
    s.geo[0, 0, :] = 9.0
    s.context[0, 0, :] = 9.0
    return s


def test_augment_identity_path(rng):
    s = generate_sample(tiny_params(seed=8), 1)
    cfg = AugmentConfig(p_hflip=0.0, p_vflip=0.0, p_erase=0.0)
    out = augment(s, rng, cfg)
    for f in ("patch", "context", "geo", "target", "water_mask"):
        assert np.array_equal(getattr(out, f), getattr(s, f)), f


def test_augment_horizontal_flip_moves_marker_jointly(rng):
    s = _marker_sample()
    cfg = AugmentConfig(p_hflip=1.0, p_vflip=0.0, p_erase=0.0)
    out = augment(s, rng, cfg)
    w = s.patch.shape[1]
    assert np.all(out.patch[0, w - 1] == 9.0)
    assert out.target[0, w - 1] == 9.0
    assert out.water_mask[0, w - 1] == 9.0
    assert np.all(out.geo[0, w - 1] == 9.0)
    assert np.all(out.context[0, s.context.shape[1] - 1] == 9.0)


def test_augment_vertical_flip_moves_marker_jointly(rng):
    s = _marker_sample()
    cfg = AugmentConfig(p_hflip=0.0, p_vflip=1.0, p_erase=0.0)
    out = augment(s, rng, cfg)
    h = s.patch.shape[0]
    assert np.all(out.patch[h - 1, 0] == 9.0)
    assert out.target[h - 1, 0] == 9.0


def test_augment_erase_mean_fill_fixed_point(rng):
    s = generate_sample(tiny_params(seed=8), 2)
    s.patch[:, :, 4] = 0.25  # constant band: mean fill leaves it unchanged
    cfg = AugmentConfig(p_hflip=0.0, p_vflip=0.0, p_erase=1.0)
    out = augment(s, rng, cfg)
    assert np.array_equal(out.patch[:, :, 4], s.patch[:, :, 4])
    assert np.array_equal(out.target, s.target)
    assert np.array_equal(out.geo, s.geo)
    assert np.array_equal(out.context, s.context)
    assert np.array_equal(out.water_mask, s.water_mask)


def test_augment_erase_area_bounds(rng):
    cfg = AugmentConfig(p_hflip=0.0, p_vflip=0.0, p_erase=1.0)
    s = generate_sample(tiny_params(seed=8), 3)
    # every pixel differs from the band mean, so changed pixels == rectangle
    s.patch[...] = rng.random(s.patch.shape).astype(np.float32) + \
        np.arange(s.patch.shape[1], dtype=np.float32)[None, :, None]
    area = s.patch.shape[0] * s.patch.shape[1]
    for _ in range(100):
        out = augment(s, rng, cfg)
        changed = np.any(out.patch != s.patch, axis=2).sum()
        assert 0.02 * area <= changed <= 0.20 * area


def test_augment_does_not_mutate_input(rng):
    s = generate_sample(tiny_params(seed=8), 4)
    before = s.patch.copy()
    augment(s, rng, AugmentConfig(p_hflip=1.0, p_vflip=1.0, p_erase=1.0))
    assert np.array_equal(s.patch, before)
