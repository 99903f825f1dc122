"""Losses, Adam with decoupled weight decay, SGDR schedule, early stopping."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllWaterError, ConfigError, NumericalError, ShapeError


@dataclass(frozen=True)
class TrainConfig:
    lr_max: float = 1e-4
    weight_decay: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 16
    t0: int = 10
    tmult: int = 2
    patience: int = 15
    max_epochs: int = 200
    lr_min: float = 0.0
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        if not self.lr_max > self.lr_min >= 0:
            raise ConfigError("require lr_max > lr_min >= 0")
        if self.t0 < 1 or self.tmult < 1:
            raise ConfigError("require t0 >= 1 and tmult >= 1")
        if self.patience < 1:
            raise ConfigError("require patience >= 1")
        if self.precision != "float32":
            raise ConfigError(
                f"precision {self.precision!r} not supported (16-bit is an "
                "optional performance flag, not implemented here)")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def masked_mae_loss(pred, target, water_mask) -> float:
    """Mean absolute error over land pixels (water_mask == 0)."""
    pred = np.asarray(pred)
    if pred.shape != np.shape(target) or pred.shape != np.shape(water_mask):
        raise ShapeError(f"shape mismatch: {pred.shape} vs {np.shape(target)} "
                         f"vs {np.shape(water_mask)}")
    land = np.asarray(water_mask) == 0
    n = int(land.sum())
    if n == 0:
        raise AllWaterError("sample is entirely water; no loss signal")
    return float(np.abs(pred - target)[land].sum(dtype=np.float64) / n)


def masked_mae_batch(logits, targets, masks):
    """Batched loss + gradient for training.

    logits (N,1,h,w), targets/masks (N,h,w).  Per-sample masked means are
    averaged over samples that have land pixels; all-water samples get zero
    gradient and are excluded from the mean.  Returns (loss, dlogits,
    n_skipped); raises AllWaterError when every sample is water.
    """
    n = logits.shape[0]
    pred = logits[:, 0]
    diff = pred - targets
    land = masks == 0
    n_land = land.sum(axis=(1, 2))
    valid = n_land > 0
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise AllWaterError("batch is entirely water")
    per_sample = np.where(valid,
                          (np.abs(diff) * land).sum(axis=(1, 2)) / np.maximum(n_land, 1),
                          0.0)
    loss = float(per_sample.sum(dtype=np.float64) / n_valid)
    scale = (valid / (np.maximum(n_land, 1) * n_valid)).astype(logits.dtype)
    dlogits = (np.sign(diff) * land * scale[:, None, None])[:, None]
    return loss, np.ascontiguousarray(dlogits), n - n_valid


def reconstruction_loss(recon, tile) -> float:
    """Mean squared error over all pixels and channels."""
    recon = np.asarray(recon)
    if recon.shape != np.shape(tile):
        raise ShapeError(f"shape mismatch: {recon.shape} vs {np.shape(tile)}")
    d = (recon - np.asarray(tile)).ravel().astype(np.float64)
    return float(np.dot(d, d) / d.size)


def reconstruction_loss_grad(recon, tile):
    """(loss, dloss/drecon) for the MSE reconstruction objective."""
    d = recon - tile
    loss = float(np.vdot(d, d) / d.size)
    return loss, (2.0 / d.size) * d


# ---------------------------------------------------------------------------
# SGDR learning-rate schedule
# ---------------------------------------------------------------------------

def lr_at(epoch, cfg: TrainConfig) -> float:
    """Cosine annealing with warm restarts, stepped per epoch.

    Cycle i has length t0 * tmult**i; at each restart the rate returns to
    lr_max, decaying to lr_min along a half-cosine within the cycle.
    """
    if epoch < 0:
        raise ConfigError(f"epoch {epoch} must be >= 0")
    t_i = float(cfg.t0)
    e = float(epoch)
    while e >= t_i:
        e -= t_i
        t_i *= cfg.tmult
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + math.cos(math.pi * e / t_i))


# ---------------------------------------------------------------------------
# Adam with decoupled weight decay
# ---------------------------------------------------------------------------

class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self):
        self.step = 0
        self.m = {}
        self.v = {}

    def ensure(self, name, like):
        if name not in self.m:
            self.m[name] = np.zeros_like(like)
            self.v[name] = np.zeros_like(like)


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig,
              lr: float, skip=frozenset()) -> None:
    """One in-place update; frozen names in `skip` are untouched.

    Weight decay is decoupled: p <- p - lr * wd * p before the moment update.
    """
    state.step += 1
    t = state.step
    beta1, beta2 = cfg.betas
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name in params:
        if name in skip:
            continue
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
        p = params[name]
        if cfg.weight_decay:
            p -= (lr * cfg.weight_decay) * p
        state.ensure(name, p)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= (lr / bc1) * m / (np.sqrt(v / bc2) + cfg.eps)


# ---------------------------------------------------------------------------
# early stopping
# ---------------------------------------------------------------------------

def early_stop(val_losses, patience: int):
    """(stop, best_epoch): stop after `patience` epochs without improvement."""
    if not len(val_losses):
        raise ConfigError("early_stop needs a non-empty history")
    best_epoch = int(np.argmin(val_losses))
    stop = (len(val_losses) - 1 - best_epoch) >= patience
    return stop, best_epoch
