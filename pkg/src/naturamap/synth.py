"""Deterministic synthetic geospatial samples.

Each sample is built from 10 smooth random bands over the full context
extent: a min-max-normalized sum of K random 2-D sinusoids per band.  The
target mixes local band-3 structure, the context-wide band-3 mean, and a
smooth function of the sample's location, so patch-only models face a
measurable information deficit that coordinates and context close.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .geo import GeoPoint, build_geo_grid

# 10 m pixels expressed in degrees at the equator
PIXEL_SIZE_DEG = 10.0 / 111320.0


@dataclass(frozen=True)
class SynthParams:
    patch_size: int = 64
    context_size: int = 256
    n_sinusoids: int = 8
    water_band: int = 7
    water_threshold: float = 0.85
    w_local: float = 0.5
    w_ctx: float = 0.3
    w_geo: float = 0.2
    lat_range: tuple = (-60.0, 70.0)
    seed: int = 0
    n_bands: int = 10
    context_band_order: tuple = (3, 2, 1)

    def __post_init__(self):
        if self.context_size != 4 * self.patch_size:
            raise ConfigError(
                f"context_size {self.context_size} != 4 * patch_size {self.patch_size}")
        if abs(self.w_local + self.w_ctx + self.w_geo - 1.0) > 1e-9:
            raise ConfigError("label weights must sum to 1")
        if not 0 <= self.water_band < self.n_bands:
            raise ConfigError(f"water_band {self.water_band} out of range")


@dataclass
class Sample:
    """One training unit; arrays are h x w (x c) float32."""
    patch: np.ndarray
    context: np.ndarray
    geo: np.ndarray
    target: np.ndarray
    water_mask: np.ndarray
    center: GeoPoint
    sample_seed: int = 0


def geo_location_term(lat_deg: float, lon_deg: float) -> float:
    """Smooth location factor in [0, 1] entering the synthetic label."""
    return 0.5 * (1.0 + np.sin(np.pi * lat_deg / 90.0) * np.cos(np.pi * lon_deg / 180.0))


def synth_band(rng: np.random.Generator, size: int, k: int) -> np.ndarray:
    """Min-max-normalized sum of k random 2-D sinusoids over a size x size grid."""
    y = np.arange(size, dtype=np.float64)[:, None]
    x = np.arange(size, dtype=np.float64)[None, :]
    f = np.zeros((size, size), dtype=np.float64)
    for _ in range(k):
        amp = 1.0 - rng.random()            # (0, 1]
        u = rng.integers(1, 7)
        v = rng.integers(1, 7)
        phase = 2.0 * np.pi * rng.random()  # [0, 2*pi)
        f += amp * np.sin(2.0 * np.pi * (u * x + v * y) / size + phase)
    lo, hi = f.min(), f.max()
    if hi - lo < 1e-12:
        return np.zeros((size, size), dtype=np.float32)
    return ((f - lo) / (hi - lo)).astype(np.float32)


def generate_sample(params: SynthParams, sample_seed: int) -> Sample:
    """Deterministic in (params.seed, sample_seed)."""
    rng = np.random.default_rng([params.seed, sample_seed])
    lat = rng.uniform(params.lat_range[0], params.lat_range[1])
    lon = rng.uniform(-180.0, 180.0)
    center = GeoPoint(lat_deg=lat, lon_deg=lon)

    s = params.context_size
    bands = np.stack([synth_band(rng, s, params.n_sinusoids)
                      for _ in range(params.n_bands)], axis=2)

    context = np.ascontiguousarray(bands[:, :, list(params.context_band_order)])
    patch = center_crop(bands, params.patch_size)
    water_mask = (patch[:, :, params.water_band] > params.water_threshold
                  ).astype(np.float32)

    ctx_mean = float(bands[:, :, 3].mean(dtype=np.float64))
    geo_term = geo_location_term(lat, lon)
    target = (params.w_local * patch[:, :, 3].astype(np.float64)
              + params.w_ctx * ctx_mean
              + params.w_geo * geo_term)
    target = np.clip(target, 0.0, 1.0).astype(np.float32)

    geo = build_geo_grid(center, params.patch_size, params.patch_size,
                         PIXEL_SIZE_DEG)
    return Sample(patch=patch, context=context, geo=geo, target=target,
                  water_mask=water_mask, center=center, sample_seed=sample_seed)


def center_crop(tile: np.ndarray, size: int) -> np.ndarray:
    """Centered size x size window of an H x W (x C) array (origin rounds down)."""
    h, w = tile.shape[0], tile.shape[1]
    if size > h or size > w:
        raise ShapeError(f"crop size {size} exceeds extent {h}x{w}")
    i0 = (h - size) // 2
    j0 = (w - size) // 2
    return np.ascontiguousarray(tile[i0:i0 + size, j0:j0 + size])
