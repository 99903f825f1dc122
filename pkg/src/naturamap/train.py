"""Two-stage training: context autoencoder first, then the regression model.

Stage 1 trains AE encoder + decoder to reconstruct context tiles (MSE).
Stage 2 trains the UNet (and, for the proposed variant, the geo encoder)
under the water-masked MAE loss with weighted sampling and augmentation,
consuming the stage-1 encoder frozen.  Both stages share Adam, the SGDR
schedule, and validation-loss early stopping.

Loops are single-threaded and bitwise reproducible for a fixed seed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import AugmentConfig, augment, compute_sample_weights, load_split
from .errors import AllWaterError, ConfigError
from .metrics import evaluate_predictions
from .model import (ArchConfig, ModelBundle, freeze, init_parameters, load_bundle,
                    save_bundle)
from .optim import (AdamState, TrainConfig, adam_step, lr_at, early_stop,
                    masked_mae_batch, reconstruction_loss_grad)

log = logging.getLogger("naturamap")

REPORT_COLUMNS = ("epoch", "train_loss", "val_loss", "lr",
                  "val_mae", "val_mse", "val_mssim")


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    stop_reason: str = ""

    def add(self, **kw):
        self.rows.append({c: kw.get(c, float("nan")) for c in REPORT_COLUMNS})

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = [",".join(REPORT_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(repr(row[c]) if c != "epoch" else str(row[c])
                                  for c in REPORT_COLUMNS))
        (out / "report.csv").write_text("\n".join(lines) + "\n")
        (out / "summary.txt").write_text(
            f"best_epoch={self.best_epoch}\n"
            f"best_val_loss={self.best_val_loss!r}\n"
            f"epochs_run={len(self.rows)}\n"
            f"stop_reason={self.stop_reason}\n")


def load_report_csv(path):
    """Rows of a saved report.csv as dicts of floats (epoch as int)."""
    lines = Path(path).read_text().splitlines()
    cols = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        vals = line.split(",")
        row = {c: (int(v) if c == "epoch" else float(v))
               for c, v in zip(cols, vals)}
        rows.append(row)
    return rows


def _snapshot(bundle: ModelBundle):
    return {k: v.copy() for k, v in bundle.all_params().items()}


def _restore(bundle: ModelBundle, snap) -> None:
    live = bundle.all_params()
    for k, v in snap.items():
        live[k][...] = v


def _nchw(stack_hwc):
    return np.ascontiguousarray(np.moveaxis(np.stack(stack_hwc), 3, 1))


def _context_batches(tiles, order, batch_size):
    for i in range(0, len(order), batch_size):
        yield _nchw([tiles[j] for j in order[i:i + batch_size]])


# ---------------------------------------------------------------------------
# stage 1: autoencoder pretraining
# ---------------------------------------------------------------------------

def train_autoencoder(manifest, cfg: TrainConfig, arch: ArchConfig = None,
                      out_dir=None):
    """Train ae_enc + ae_dec to reconstruct context tiles; returns (bundle, report)."""
    arch = arch or ArchConfig()
    train_tiles = [s.context for s in load_split(manifest, "train")]
    val_tiles = [s.context for s in load_split(manifest, "val")]
    if not train_tiles:
        raise ConfigError("autoencoder training needs a non-empty train split")

    bundle = init_parameters(arch, cfg.seed, variant="autoencoder")
    enc, dec = bundle.component("ae_enc"), bundle.component("ae_dec")
    state = AdamState()
    rng = np.random.default_rng(cfg.seed)
    report = TrainReport()
    best = _snapshot(bundle)
    monitors = []

    for epoch in range(cfg.max_epochs):
        lr = lr_at(epoch, cfg)
        order = rng.permutation(len(train_tiles))
        loss_sum = 0.0
        for x in _context_batches(train_tiles, order, cfg.batch_size):
            recon = dec.forward(enc.forward(x, train=True), train=True)
            loss, dr = reconstruction_loss_grad(recon, x)
            enc.backward(dec.backward(dr))
            adam_step(bundle.trainable_params(), bundle.grads(), state, cfg, lr)
            loss_sum += loss * x.shape[0]
        train_loss = loss_sum / len(train_tiles)

        val_loss = _ae_val_loss(enc, dec, val_tiles, cfg.batch_size)
        report.add(epoch=epoch, train_loss=train_loss, val_loss=val_loss, lr=lr)
        # monitor train loss when there is no validation split (overfit runs)
        monitor = val_loss if val_tiles else train_loss
        monitors.append(monitor)
        if monitor < report.best_val_loss:
            report.best_val_loss = monitor
            report.best_epoch = epoch
            best = _snapshot(bundle)
        stop, _ = early_stop(monitors, cfg.patience)
        if stop:
            report.stop_reason = "early-stop"
            break
    else:
        report.stop_reason = "max-epochs"

    _restore(bundle, best)
    if out_dir is not None:
        save_bundle(bundle, out_dir)
        report.save(out_dir)
    return bundle, report


def _ae_val_loss(enc, dec, tiles, batch_size):
    if not tiles:
        return float("nan")
    total = 0.0
    for x in _context_batches(tiles, np.arange(len(tiles)), batch_size):
        recon = dec.forward(enc.forward(x, train=False), train=False)
        d = (recon - x).ravel()
        total += float(np.dot(d, d))
    return total / (len(tiles) * tiles[0].size)


# ---------------------------------------------------------------------------
# stage 2: regression training (baseline or proposed)
# ---------------------------------------------------------------------------

def _forward_batch(bundle: ModelBundle, variant, patch, geo, ctx, train):
    skips, l_p = bundle.component("unet_enc").forward(patch, train=train)
    if variant == "proposed":
        l_c = bundle.component("geo_enc").forward(geo, train=train)
        l_t = bundle.component("ae_enc").forward(ctx, train=False)
        latent = np.concatenate([l_p, l_c, l_t], axis=1)
    else:
        latent = l_p
    logits = bundle.component("unet_dec").forward(latent, skips, train=train)
    return logits, l_p.shape[1]


def _backward_batch(bundle: ModelBundle, variant, dlogits, c_lp):
    dlatent, dskips = bundle.component("unet_dec").backward(dlogits)
    if variant == "proposed":
        c_lc = bundle.arch.geo_latent_channels
        d_lp = np.ascontiguousarray(dlatent[:, :c_lp])
        d_lc = np.ascontiguousarray(dlatent[:, c_lp:c_lp + c_lc])
        bundle.component("geo_enc").backward(d_lc)
    else:
        d_lp = dlatent
    bundle.component("unet_enc").backward(d_lp, dskips)


def _sample_batch(samples, idxs, rng, aug):
    chosen = [samples[i] for i in idxs]
    if rng is not None:
        chosen = [augment(s, rng, aug) for s in chosen]
    patch = _nchw([s.patch for s in chosen])
    geo = _nchw([s.geo for s in chosen])
    ctx = _nchw([s.context for s in chosen])
    target = np.stack([s.target for s in chosen])
    mask = np.stack([s.water_mask for s in chosen])
    return patch, geo, ctx, target, mask


def _validate(bundle, variant, samples, ids, batch_size):
    """(val masked-MAE loss on raw logits, EvalReport on clamped predictions)."""
    loss_sum = 0.0
    n_loss = 0
    pairs = []
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        patch, geo, ctx, target, mask = _sample_batch(chunk, range(len(chunk)),
                                                      None, None)
        logits, _ = _forward_batch(bundle, variant, patch, geo, ctx, train=False)
        for j, s in enumerate(chunk):
            land = s.water_mask == 0
            if land.any():
                loss_sum += float(np.abs(logits[j, 0] - s.target)[land].mean())
                n_loss += 1
            pred = np.clip(logits[j, 0], 0.0, 1.0)
            pairs.append((ids[i + j], pred, s.target, s.water_mask))
    val_loss = loss_sum / n_loss if n_loss else float("nan")
    return val_loss, evaluate_predictions(pairs, split="val", variant=variant)


def train_model(manifest, cfg: TrainConfig, arch: ArchConfig = None,
                variant: str = "proposed", ae_checkpoint=None, out_dir=None,
                aug: AugmentConfig = AugmentConfig()):
    """Stage-2 training; returns (bundle, report).

    The proposed variant requires the stage-1 checkpoint (its encoder is
    loaded and frozen); the baseline forbids it.
    """
    arch = arch or ArchConfig()
    if variant == "proposed" and ae_checkpoint is None:
        raise ConfigError("proposed variant requires an autoencoder checkpoint")
    if variant == "baseline" and ae_checkpoint is not None:
        raise ConfigError("baseline variant does not take an autoencoder checkpoint")
    if variant not in ("baseline", "proposed"):
        raise ConfigError(f"unknown variant {variant!r}")

    train_samples = load_split(manifest, "train")
    val_samples = load_split(manifest, "val")
    if not train_samples:
        raise ConfigError("training needs a non-empty train split")

    bundle = init_parameters(arch, cfg.seed, variant=variant)
    if variant == "proposed":
        ae = load_bundle(ae_checkpoint)
        if ae.arch != arch:
            raise ConfigError(
                f"autoencoder checkpoint arch {ae.arch} does not match "
                f"configured arch {arch}")
        src = ae.component("ae_enc").params()
        dst = bundle.component("ae_enc").params()
        for k in dst:
            dst[k][...] = src[k]
        freeze(bundle, "ae_enc")

    weights = compute_sample_weights(manifest, "train")
    state = AdamState()
    rng = np.random.default_rng(cfg.seed)
    report = TrainReport()
    best = _snapshot(bundle)
    monitors = []
    n = len(train_samples)
    val_ids = manifest.splits["val"]

    for epoch in range(cfg.max_epochs):
        lr = lr_at(epoch, cfg)
        draws = rng.choice(n, size=n, replace=True, p=weights)
        loss_sum = 0.0
        n_seen = 0
        for i in range(0, n, cfg.batch_size):
            batch = _sample_batch(train_samples, draws[i:i + cfg.batch_size], rng, aug)
            patch, geo, ctx, target, mask = batch
            logits, c_lp = _forward_batch(bundle, variant, patch, geo, ctx, train=True)
            try:
                loss, dlogits, skipped = masked_mae_batch(logits, target, mask)
            except AllWaterError:
                log.warning("skipping an all-water batch at epoch %d", epoch)
                continue
            if skipped:
                log.warning("excluded %d all-water sample(s) from a batch", skipped)
            _backward_batch(bundle, variant, dlogits, c_lp)
            adam_step(bundle.trainable_params(), bundle.grads(), state, cfg, lr)
            loss_sum += loss * (patch.shape[0] - skipped)
            n_seen += patch.shape[0] - skipped
        train_loss = loss_sum / n_seen if n_seen else float("nan")

        if val_samples:
            val_loss, ev = _validate(bundle, variant, val_samples, val_ids,
                                     cfg.batch_size)
            report.add(epoch=epoch, train_loss=train_loss, val_loss=val_loss,
                       lr=lr, val_mae=ev.mae, val_mse=ev.mse, val_mssim=ev.mssim)
            monitor = val_loss
        else:
            report.add(epoch=epoch, train_loss=train_loss,
                       val_loss=float("nan"), lr=lr)
            monitor = train_loss
        monitors.append(monitor)
        if monitor < report.best_val_loss:
            report.best_val_loss = monitor
            report.best_epoch = epoch
            best = _snapshot(bundle)
        stop, _ = early_stop(monitors, cfg.patience)
        if stop:
            report.stop_reason = "early-stop"
            break
    else:
        report.stop_reason = "max-epochs"

    _restore(bundle, best)
    if out_dir is not None:
        save_bundle(bundle, out_dir)
        report.save(out_dir)
    return bundle, report
