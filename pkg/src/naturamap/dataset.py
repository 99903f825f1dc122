"""Dataset layout, manifest, sample weighting, and augmentation.

On-disk layout:

    root/manifest.txt
    root/{train,val,test}/sample_<id>/
        patch.ntsr context.ntsr geo.ntsr target.ntsr mask.ntsr meta.txt

The manifest is plain text: `key=value` generator-parameter lines followed
by one `split,id` line per sample.  meta.txt holds `lat=`, `lon=`, `seed=`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geo import GeoPoint
from .ntsr import read_tensor, write_tensor
from .synth import Sample, SynthParams, generate_sample

SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.txt"
FORMAT_VERSION = 1
TENSOR_FILES = ("patch.ntsr", "context.ntsr", "geo.ntsr", "target.ntsr", "mask.ntsr")


@dataclass
class DatasetManifest:
    root: Path
    splits: dict = field(default_factory=lambda: {s: [] for s in SPLITS})
    params: SynthParams = field(default_factory=SynthParams)
    format_version: int = FORMAT_VERSION

    def sample_dir(self, split: str, sample_id: str) -> Path:
        return Path(self.root) / split / sample_id

    def counts(self):
        return {s: len(ids) for s, ids in self.splits.items()}


def _params_lines(p: SynthParams):
    return [f"format_version={FORMAT_VERSION}",
            f"patch_size={p.patch_size}",
            f"context_size={p.context_size}",
            f"n_sinusoids={p.n_sinusoids}",
            f"water_band={p.water_band}",
            f"water_threshold={p.water_threshold!r}",
            f"w_local={p.w_local!r}",
            f"w_ctx={p.w_ctx!r}",
            f"w_geo={p.w_geo!r}",
            f"lat_min={p.lat_range[0]!r}",
            f"lat_max={p.lat_range[1]!r}",
            f"seed={p.seed}"]


def save_manifest(manifest: DatasetManifest) -> None:
    lines = _params_lines(manifest.params)
    for split in SPLITS:
        for sid in manifest.splits[split]:
            lines.append(f"{split},{sid}")
    (Path(manifest.root) / MANIFEST_NAME).write_text("\n".join(lines) + "\n")


def load_manifest(root) -> DatasetManifest:
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    kv = {}
    splits = {s: [] for s in SPLITS}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if "," in line and "=" not in line:
            split, sid = line.split(",", 1)
            if split not in SPLITS:
                raise ConfigError(f"{path}: unknown split {split!r}")
            splits[split].append(sid)
        else:
            k, _, v = line.partition("=")
            kv[k] = v
    params = SynthParams(
        patch_size=int(kv["patch_size"]),
        context_size=int(kv["context_size"]),
        n_sinusoids=int(kv["n_sinusoids"]),
        water_band=int(kv["water_band"]),
        water_threshold=float(kv["water_threshold"]),
        w_local=float(kv["w_local"]),
        w_ctx=float(kv["w_ctx"]),
        w_geo=float(kv["w_geo"]),
        lat_range=(float(kv["lat_min"]), float(kv["lat_max"])),
        seed=int(kv["seed"]))
    return DatasetManifest(root=Path(root), splits=splits, params=params,
                           format_version=int(kv.get("format_version", 1)))


def write_sample(sample: Sample, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "patch.ntsr", sample.patch)
    write_tensor(out / "context.ntsr", sample.context)
    write_tensor(out / "geo.ntsr", sample.geo)
    write_tensor(out / "target.ntsr", sample.target)
    write_tensor(out / "mask.ntsr", sample.water_mask)
    (out / "meta.txt").write_text(
        f"lat={sample.center.lat_deg!r}\nlon={sample.center.lon_deg!r}\n"
        f"seed={sample.sample_seed}\n")


def read_sample(sample_dir) -> Sample:
    d = Path(sample_dir)
    meta = {}
    for line in (d / "meta.txt").read_text().splitlines():
        k, _, v = line.partition("=")
        meta[k] = v
    return Sample(
        patch=read_tensor(d / "patch.ntsr"),
        context=read_tensor(d / "context.ntsr"),
        geo=read_tensor(d / "geo.ntsr"),
        target=read_tensor(d / "target.ntsr"),
        water_mask=read_tensor(d / "mask.ntsr"),
        center=GeoPoint(lat_deg=float(meta["lat"]), lon_deg=float(meta["lon"])),
        sample_seed=int(meta["seed"]))


def generate_dataset(params: SynthParams, n_train: int, n_val: int, n_test: int,
                     root, overwrite: bool = False) -> DatasetManifest:
    """Write a full synthetic dataset; deterministic in params."""
    if min(n_train, n_val, n_test) < 0:
        raise ConfigError("sample counts must be >= 0")
    rootp = Path(root)
    if rootp.exists() and any(rootp.iterdir()) and not overwrite:
        raise ConfigError(f"{rootp} is not empty; pass overwrite to regenerate")
    rootp.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(root=rootp, params=params)
    counts = {"train": n_train, "val": n_val, "test": n_test}
    next_seed = 0
    for split in SPLITS:
        for _ in range(counts[split]):
            sid = f"sample_{next_seed:06d}"
            sample = generate_sample(params, next_seed)
            write_sample(sample, rootp / split / sid)
            manifest.splits[split].append(sid)
            next_seed += 1
    save_manifest(manifest)
    return manifest


def load_split(manifest: DatasetManifest, split: str):
    """Eagerly read every sample of a split (desk-scale datasets fit in RAM)."""
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}")
    return [read_sample(manifest.sample_dir(split, sid))
            for sid in manifest.splits[split]]


# ---------------------------------------------------------------------------
# imbalance-aware sample weighting
# ---------------------------------------------------------------------------

def bin_weights(mean_targets, n_bins: int = 10):
    """Inverse-frequency weights from equal-width bins on [0, 1], sum 1."""
    means = np.asarray(mean_targets, dtype=np.float64)
    if means.size == 0:
        return np.zeros(0, dtype=np.float64)
    bins = np.minimum((means * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(bins, minlength=n_bins)
    w = 1.0 / counts[bins]
    return w / w.sum()


def compute_sample_weights(manifest: DatasetManifest, split: str):
    """Per-sample draw probabilities for the weighted sampler."""
    ids = manifest.splits[split]
    means = [float(read_tensor(manifest.sample_dir(split, sid) / "target.ntsr").mean())
             for sid in ids]
    return bin_weights(means)


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentConfig:
    p_hflip: float = 0.5
    p_vflip: float = 0.5
    p_erase: float = 0.5
    erase_min_frac: float = 0.02
    erase_max_frac: float = 0.20


def augment(sample: Sample, rng: np.random.Generator,
            cfg: AugmentConfig = AugmentConfig()) -> Sample:
    """Random flips applied jointly to all rasters; random erasing on the patch.

    Flips keep per-pixel correspondence between inputs and the target; the
    erased rectangle covers 2-20% of the patch and is filled per band with
    that band's patch mean.  The target, mask, geo grid, and context are
    never erased.
    """
    do_h = rng.random() < cfg.p_hflip
    do_v = rng.random() < cfg.p_vflip
    do_e = rng.random() < cfg.p_erase

    patch, context, geo = sample.patch, sample.context, sample.geo
    target, mask = sample.target, sample.water_mask
    if do_h:
        patch, context, geo = patch[:, ::-1], context[:, ::-1], geo[:, ::-1]
        target, mask = target[:, ::-1], mask[:, ::-1]
    if do_v:
        patch, context, geo = patch[::-1], context[::-1], geo[::-1]
        target, mask = target[::-1], mask[::-1]
    # erase mutates; always leave the caller's arrays untouched
    patch = patch.copy() if do_e else np.ascontiguousarray(patch)
    if do_e:
        h, w = patch.shape[0], patch.shape[1]
        area = h * w
        frac_lo, frac_hi = cfg.erase_min_frac, cfg.erase_max_frac
        he_min = max(1, math.ceil(frac_lo * area / w))
        he_max = min(h, math.floor(frac_hi * area))
        he = int(rng.integers(he_min, he_max + 1))
        we_lo = max(1, math.ceil(frac_lo * area / he))
        we_hi = min(w, math.floor(frac_hi * area / he))
        we = int(rng.integers(we_lo, we_hi + 1))
        i0 = int(rng.integers(0, h - he + 1))
        j0 = int(rng.integers(0, w - we + 1))
        fill = patch.mean(axis=(0, 1))
        patch[i0:i0 + he, j0:j0 + we, :] = fill
    return Sample(patch=patch,
                  context=np.ascontiguousarray(context),
                  geo=np.ascontiguousarray(geo),
                  target=np.ascontiguousarray(target),
                  water_mask=np.ascontiguousarray(mask),
                  center=sample.center,
                  sample_seed=sample.sample_seed)
