"""Water-masked evaluation metrics: MAE, MSE, and mean SSIM.

SSIM follows the canonical definition: 11x11 Gaussian window (sigma 1.5),
C1 = (0.01 L)^2, C2 = (0.03 L)^2 with L = 1 for maps in [0, 1], computed on
valid (unpadded) windows.  A window enters the mean only if it contains no
water pixel; when no window qualifies the mean falls back to all windows
and the result is flagged.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError
from .model import predict

UNDEFINED = float("nan")


def _check_shapes(pred, target, mask):
    if np.shape(pred) != np.shape(target) or np.shape(pred) != np.shape(mask):
        raise ShapeError(f"shape mismatch: {np.shape(pred)} vs {np.shape(target)} "
                         f"vs {np.shape(mask)}")


def masked_mae(pred, target, mask):
    """Mean |pred - target| over land pixels; None if everything is masked."""
    _check_shapes(pred, target, mask)
    land = np.asarray(mask) == 0
    n = int(land.sum())
    if n == 0:
        return None
    return float(np.abs(np.asarray(pred, np.float64) - target)[land].mean())


def masked_mse(pred, target, mask):
    """Mean (pred - target)^2 over land pixels; None if everything is masked."""
    _check_shapes(pred, target, mask)
    land = np.asarray(mask) == 0
    n = int(land.sum())
    if n == 0:
        return None
    d = (np.asarray(pred, np.float64) - target)[land]
    return float((d * d).mean())


def gaussian_window(size: int = 11, sigma: float = 1.5):
    """1-D Gaussian taps normalized to sum 1 (separable 2-D window)."""
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    """Separable valid-mode correlation of a 2-D image with g (rows then cols)."""
    win = g.size
    rows = np.lib.stride_tricks.sliding_window_view(img, win, axis=1) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, win, axis=0) @ g


def ssim_map(pred, target, window: int = 11, sigma: float = 1.5, value_range: float = 1.0,
             k1: float = 0.01, k2: float = 0.03):
    """Per-window SSIM on valid windows; returns an (h-w+1, w-w+1) map."""
    h, w = pred.shape
    if h < window or w < window:
        raise ConfigError(f"image {h}x{w} smaller than the {window}-pixel window")
    g = gaussian_window(window, sigma)
    x = np.asarray(pred, np.float64)
    y = np.asarray(target, np.float64)
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    sig_x = _filter_valid(x * x, g) - mu_x * mu_x
    sig_y = _filter_valid(y * y, g) - mu_y * mu_y
    sig_xy = _filter_valid(x * y, g) - mu_x * mu_y
    c1 = (k1 * value_range) ** 2
    c2 = (k2 * value_range) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sig_xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sig_x + sig_y + c2)
    return num / den


def mssim(pred, target, mask=None, window: int = 11, sigma: float = 1.5,
          value_range: float = 1.0, k1: float = 0.01, k2: float = 0.03,
          return_flag: bool = False):
    """Mean SSIM over windows whose footprint contains no water pixel.

    Falls back to the unrestricted mean (flagged) when no window qualifies.
    """
    if np.shape(pred) != np.shape(target):
        raise ShapeError(f"shape mismatch: {np.shape(pred)} vs {np.shape(target)}")
    smap = ssim_map(pred, target, window, sigma, value_range, k1, k2)
    fallback = False
    if mask is not None:
        _check_shapes(pred, target, mask)
        ones = np.ones(window, dtype=np.float64)
        water_in_window = _filter_valid(np.asarray(mask, np.float64), ones)
        clean = water_in_window == 0.0
        if clean.any():
            value = float(smap[clean].mean())
        else:
            value = float(smap.mean())
            fallback = True
    else:
        value = float(smap.mean())
    return (value, fallback) if return_flag else value


@dataclass
class EvalReport:
    """Per-sample and aggregate metrics for one split/variant."""
    split: str
    variant: str
    sample_ids: list = field(default_factory=list)
    per_sample: list = field(default_factory=list)   # dicts: mae, mse, mssim, ...
    mae: float = UNDEFINED                           # pixel-weighted
    mse: float = UNDEFINED                           # pixel-weighted
    mssim: float = UNDEFINED                         # sample-averaged
    land_pixels: int = 0
    total_pixels: int = 0
    n_samples: int = 0
    n_all_water: int = 0
    n_mssim_fallback: int = 0

    @property
    def mask_coverage(self) -> float:
        if self.total_pixels == 0:
            return 0.0
        return 1.0 - self.land_pixels / self.total_pixels

    def save(self, path) -> None:
        lines = [f"split={self.split}", f"variant={self.variant}",
                 f"mae={self.mae!r}", f"mse={self.mse!r}", f"mssim={self.mssim!r}",
                 f"land_pixels={self.land_pixels}", f"total_pixels={self.total_pixels}",
                 f"mask_coverage={self.mask_coverage!r}",
                 f"n_samples={self.n_samples}", f"n_all_water={self.n_all_water}",
                 f"n_mssim_fallback={self.n_mssim_fallback}", "",
                 "sample_id,mae,mse,mssim,land_pixels,mssim_fallback"]
        for sid, row in zip(self.sample_ids, self.per_sample):
            lines.append(f"{sid},{row['mae']!r},{row['mse']!r},{row['mssim']!r},"
                         f"{row['land_pixels']},{int(row['mssim_fallback'])}")
        Path(path).write_text("\n".join(lines) + "\n")


def evaluate_predictions(pairs, split: str = "", variant: str = "") -> EvalReport:
    """Aggregate metrics over (sample_id, pred, target, mask) tuples."""
    report = EvalReport(split=split, variant=variant)
    abs_sum = 0.0
    sq_sum = 0.0
    ssim_vals = []
    for sid, pred, target, mask in pairs:
        land = np.asarray(mask) == 0
        n_land = int(land.sum())
        report.n_samples += 1
        report.total_pixels += int(land.size)
        report.land_pixels += n_land
        if n_land == 0:
            report.n_all_water += 1
            report.sample_ids.append(sid)
            report.per_sample.append(dict(mae=UNDEFINED, mse=UNDEFINED,
                                          mssim=UNDEFINED, land_pixels=0,
                                          mssim_fallback=False))
            continue
        d = (np.asarray(pred, np.float64) - target)[land]
        abs_sum += float(np.abs(d).sum())
        sq_sum += float((d * d).sum())
        s, flag = mssim(pred, target, mask, return_flag=True)
        ssim_vals.append(s)
        report.n_mssim_fallback += int(flag)
        report.sample_ids.append(sid)
        report.per_sample.append(dict(mae=float(np.abs(d).mean()),
                                      mse=float((d * d).mean()),
                                      mssim=s, land_pixels=n_land,
                                      mssim_fallback=flag))
    if report.land_pixels:
        report.mae = abs_sum / report.land_pixels
        report.mse = sq_sum / report.land_pixels
    if ssim_vals:
        report.mssim = float(np.mean(ssim_vals))
    return report


def evaluate(bundle, manifest, split: str, variant: str) -> EvalReport:
    """Predict every sample of the split and compute all three metrics."""
    from .dataset import load_split
    samples = load_split(manifest, split)
    if not samples:
        raise ConfigError(f"split {split!r} is empty")
    ids = manifest.splits[split]
    pairs = ((sid, predict(bundle, s, variant), s.target, s.water_mask)
             for sid, s in zip(ids, samples))
    return evaluate_predictions(pairs, split=split, variant=variant)
