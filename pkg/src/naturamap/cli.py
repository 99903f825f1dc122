"""Command-line interface.

Subcommands: gen, train-ae, train, eval, compare, predict.
Configuration is a flat key=value file (--config) merged with command-line
flags; flags win.  Unknown keys in the file are rejected.  Commands with an
output directory echo the effective configuration there.

Exit codes: 0 success, 2 config/usage error, 3 I/O error, 4 numerical abort.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .dataset import load_manifest, generate_dataset
from .errors import (ConfigError, CorruptFileError, FormatError,
                     InvalidCoordinateError, NumericalError, ShapeError)
from .metrics import evaluate
from .model import ArchConfig, load_bundle, predict
from .optim import TrainConfig
from .synth import Sample, SynthParams
from .train import train_autoencoder, train_model
from .ntsr import read_tensor, write_tensor
from .geo import GeoPoint

# key -> (parse, default); defaults live in the dataclasses
_KEYS = {
    "patch_size": int, "context_size": int, "n_sinusoids": int,
    "water_band": int, "water_threshold": float,
    "w_local": float, "w_ctx": float, "w_geo": float,
    "lat_min": float, "lat_max": float, "seed": int,
    "n_train": int, "n_val": int, "n_test": int,
    "ladder": str, "geo_latent_channels": int, "unet_pools": int, "ae_pools": int,
    "lr_max": float, "lr_min": float, "weight_decay": float,
    "beta1": float, "beta2": float, "eps": float,
    "batch_size": int, "t0": int, "tmult": int, "patience": int,
    "max_epochs": int, "precision": str, "variant": str,
}


def _read_config_file(path):
    out = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
        if key not in _KEYS:
            raise ConfigError(f"{path}:{ln}: unknown config key {key!r}")
        try:
            out[key] = _KEYS[key](value.strip())
        except ValueError as e:
            raise ConfigError(f"{path}:{ln}: bad value for {key}: {e}")
    return out


def _effective(args, needed):
    """Merge config file and flags for the listed keys (flags win)."""
    file_cfg = _read_config_file(args.config) if getattr(args, "config", None) else {}
    eff = {}
    for key in needed:
        flag = getattr(args, key, None)
        if flag is not None:
            eff[key] = flag
        elif key in file_cfg:
            eff[key] = file_cfg[key]
    return eff


def _echo_config(eff, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={eff[k]}" for k in sorted(eff)]
    (out / "effective_config.txt").write_text("\n".join(lines) + "\n")


def _synth_params(eff):
    kw = {}
    for key in ("patch_size", "context_size", "n_sinusoids", "water_band",
                "water_threshold", "w_local", "w_ctx", "w_geo", "seed"):
        if key in eff:
            kw[key] = eff[key]
    if "lat_min" in eff or "lat_max" in eff:
        base = SynthParams()
        kw["lat_range"] = (eff.get("lat_min", base.lat_range[0]),
                           eff.get("lat_max", base.lat_range[1]))
    return SynthParams(**kw)


def _arch_config(eff):
    kw = {}
    for key in ("patch_size", "context_size", "geo_latent_channels",
                "unet_pools", "ae_pools"):
        if key in eff:
            kw[key] = eff[key]
    if "ladder" in eff:
        try:
            kw["channel_ladder"] = tuple(int(c) for c in str(eff["ladder"]).split(","))
        except ValueError:
            raise ConfigError(f"bad ladder {eff['ladder']!r}; expected e.g. 8,16,32,64")
    return ArchConfig(**kw)


def _train_config(eff):
    kw = {}
    for key in ("lr_max", "lr_min", "weight_decay", "eps", "batch_size",
                "t0", "tmult", "patience", "max_epochs", "seed", "precision"):
        if key in eff:
            kw[key] = eff[key]
    if "beta1" in eff or "beta2" in eff:
        base = TrainConfig()
        kw["betas"] = (eff.get("beta1", base.betas[0]),
                       eff.get("beta2", base.betas[1]))
    return TrainConfig(**kw)


def write_pgm(path, values01) -> None:
    """8-bit binary grayscale (PGM P5); 0 -> black, 1 -> white."""
    v = np.asarray(values01)
    if v.ndim != 2:
        raise ShapeError(f"image export expects a 2-D map, got {v.shape}")
    pix = np.rint(255.0 * np.clip(v, 0.0, 1.0)).astype(np.uint8)
    header = f"P5\n{v.shape[1]} {v.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + pix.tobytes())


def _load_sample_dir(sample_dir, need_fusion_inputs):
    d = Path(sample_dir)
    meta = {}
    for line in (d / "meta.txt").read_text().splitlines():
        k, _, v = line.partition("=")
        meta[k] = v
    geo = ctx = None
    if need_fusion_inputs or (d / "geo.ntsr").exists():
        geo = read_tensor(d / "geo.ntsr")
    if need_fusion_inputs or (d / "context.ntsr").exists():
        ctx = read_tensor(d / "context.ntsr")
    return Sample(
        patch=read_tensor(d / "patch.ntsr"),
        context=ctx, geo=geo,
        target=read_tensor(d / "target.ntsr"),
        water_mask=read_tensor(d / "mask.ntsr"),
        center=GeoPoint(lat_deg=float(meta["lat"]), lon_deg=float(meta["lon"])),
        sample_seed=int(meta.get("seed", 0)))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args):
    eff = _effective(args, ("patch_size", "context_size", "n_sinusoids",
                            "water_band", "water_threshold", "w_local", "w_ctx",
                            "w_geo", "lat_min", "lat_max", "seed",
                            "n_train", "n_val", "n_test"))
    params = _synth_params(eff)
    n_train = eff.get("n_train", 0)
    n_val = eff.get("n_val", 0)
    n_test = eff.get("n_test", 0)
    generate_dataset(params, n_train, n_val, n_test, args.out,
                     overwrite=args.overwrite)
    _echo_config(eff, args.out)
    print(f"wrote {n_train}/{n_val}/{n_test} train/val/test samples to {args.out}")
    return 0


def cmd_train_ae(args):
    eff = _effective(args, tuple(k for k in _KEYS if k not in ("variant",)))
    manifest = load_manifest(args.data)
    # dataset geometry wins over config-file geometry
    arch = _arch_config({**eff, "patch_size": manifest.params.patch_size,
                         "context_size": manifest.params.context_size})
    cfg = _train_config(eff)
    _echo_config(eff, args.out)
    _, report = train_autoencoder(manifest, cfg, arch, out_dir=args.out)
    print(f"autoencoder: best val loss {report.best_val_loss:.6g} at epoch "
          f"{report.best_epoch} ({report.stop_reason})")
    return 0


def cmd_train(args):
    eff = _effective(args, tuple(_KEYS))
    variant = eff.get("variant", "proposed")
    if variant == "proposed" and not args.ae:
        raise ConfigError("--variant proposed requires --ae (the stage-1 "
                          "autoencoder checkpoint); train it with `train-ae`")
    if variant == "baseline" and args.ae:
        raise ConfigError("--variant baseline does not take --ae")
    manifest = load_manifest(args.data)
    arch = _arch_config({**eff, "patch_size": manifest.params.patch_size,
                         "context_size": manifest.params.context_size})
    cfg = _train_config(eff)
    _echo_config({**eff, "variant": variant}, args.out)
    _, report = train_model(manifest, cfg, arch, variant=variant,
                            ae_checkpoint=args.ae, out_dir=args.out)
    print(f"{variant}: best val loss {report.best_val_loss:.6g} at epoch "
          f"{report.best_epoch} ({report.stop_reason})")
    return 0


def cmd_eval(args):
    manifest = load_manifest(args.data)
    bundle = load_bundle(args.model)
    if bundle.arch.patch_size != manifest.params.patch_size:
        raise ConfigError(
            f"checkpoint patch size {bundle.arch.patch_size} does not match "
            f"dataset patch size {manifest.params.patch_size}")
    report = evaluate(bundle, manifest, args.split, bundle.variant)
    report.save(args.report)
    print(f"{bundle.variant} on {args.split}: MAE {report.mae:.4f} "
          f"MSE {report.mse:.4f} MSSIM {report.mssim:.4f}")
    return 0


def cmd_compare(args):
    manifest = load_manifest(args.data)
    rows = []
    for name, ckpt in (("baseline", args.baseline), ("proposed", args.proposed)):
        bundle = load_bundle(ckpt)
        if bundle.variant != name:
            raise ConfigError(f"--{name} points at a {bundle.variant!r} checkpoint")
        if bundle.arch.patch_size != manifest.params.patch_size:
            raise ConfigError(f"{name} checkpoint does not match dataset patch size")
        rows.append(evaluate(bundle, manifest, args.split, name))
    base, prop = rows
    lines = ["features,mae,mse,mssim",
             f"baseline,{base.mae!r},{base.mse!r},{base.mssim!r}",
             f"proposed,{prop.mae!r},{prop.mse!r},{prop.mssim!r}", ""]
    for metric in ("mae", "mse", "mssim"):
        b, p = getattr(base, metric), getattr(prop, metric)
        rel = (p - b) / b if b else float("nan")
        lines.append(f"rel_delta_{metric}={rel!r}")
    Path(args.report).write_text("\n".join(lines) + "\n")
    print(f"baseline MAE {base.mae:.4f} vs proposed {prop.mae:.4f} "
          f"(rel {100 * (prop.mae - base.mae) / base.mae:+.1f}%)")
    return 0


def cmd_predict(args):
    panel_mode = args.baseline or args.proposed
    if panel_mode and not (args.baseline and args.proposed):
        raise ConfigError("panel output needs both --baseline and --proposed")
    if not panel_mode and not args.model:
        raise ConfigError("predict needs --model (or both --baseline/--proposed)")

    if panel_mode:
        sample = _load_sample_dir(args.sample, need_fusion_inputs=True)
        base = load_bundle(args.baseline)
        prop = load_bundle(args.proposed)
        map_base = predict(base, sample, "baseline")
        map_prop = predict(prop, sample, "proposed")
        if args.out_map:
            write_tensor(args.out_map, map_prop)
        if args.out_image:
            sep = np.ones((sample.target.shape[0], 2), dtype=np.float32)
            panel = np.concatenate(
                [sample.target, sep, map_base, sep, map_prop], axis=1)
            write_pgm(args.out_image, panel)
    else:
        bundle = load_bundle(args.model)
        variant = args.variant or bundle.variant
        sample = _load_sample_dir(args.sample,
                                  need_fusion_inputs=(variant == "proposed"))
        out_map = predict(bundle, sample, variant)
        if args.out_map:
            write_tensor(args.out_map, out_map)
        if args.out_image:
            write_pgm(args.out_image, out_map)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_key_flags(p, keys):
    for key in keys:
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=_KEYS[key],
                       default=None)


def build_parser():
    ap = argparse.ArgumentParser(
        prog="naturamap",
        description="Synthetic land-naturalness mapping: dataset generation, "
                    "two-stage training, evaluation, and prediction export.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--n-train", dest="n_train", type=int, default=None)
    p.add_argument("--n-val", dest="n_val", type=int, default=None)
    p.add_argument("--n-test", dest="n_test", type=int, default=None)
    p.add_argument("--patch", dest="patch_size", type=int, default=None)
    p.add_argument("--context", dest="context_size", type=int, default=None)
    _add_key_flags(p, ("seed", "n_sinusoids", "water_band", "water_threshold",
                       "w_local", "w_ctx", "w_geo", "lat_min", "lat_max"))
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train-ae", help="stage 1: train the context autoencoder")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_key_flags(p, ("seed", "ladder", "geo_latent_channels", "unet_pools",
                       "ae_pools", "lr_max", "lr_min", "weight_decay", "beta1",
                       "beta2", "eps", "batch_size", "t0", "tmult", "patience",
                       "max_epochs", "precision"))
    p.set_defaults(func=cmd_train_ae)

    p = sub.add_parser("train", help="stage 2: train baseline or proposed model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ae", help="stage-1 checkpoint (required for proposed)")
    p.add_argument("--config")
    p.add_argument("--variant", dest="variant", choices=("baseline", "proposed"),
                   default=None)
    _add_key_flags(p, ("seed", "ladder", "geo_latent_channels", "unet_pools",
                       "ae_pools", "lr_max", "lr_min", "weight_decay", "beta1",
                       "beta2", "eps", "batch_size", "t0", "tmult", "patience",
                       "max_epochs", "precision"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--model", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="baseline-vs-proposed metric table")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--baseline", required=True)
    p.add_argument("--proposed", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("predict", help="predict one sample; export map and image")
    p.add_argument("--sample", required=True, help="sample directory")
    p.add_argument("--model")
    p.add_argument("--variant", choices=("baseline", "proposed"))
    p.add_argument("--baseline", help="baseline checkpoint (panel mode)")
    p.add_argument("--proposed", help="proposed checkpoint (panel mode)")
    p.add_argument("--out-map", dest="out_map")
    p.add_argument("--out-image", dest="out_image")
    p.set_defaults(func=cmd_predict)
    return ap


def _apply_thread_cap():
    cap = os.environ.get("NATURAMAP_THREADS")
    if not cap:
        return
    try:
        n = max(1, int(cap))
    except ValueError:
        raise ConfigError(f"NATURAMAP_THREADS={cap!r} is not an integer")
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=n)
    except ImportError:
        os.environ.setdefault("OMP_NUM_THREADS", str(n))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _apply_thread_cap()
        return args.func(args)
    except (ConfigError, InvalidCoordinateError, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FormatError, CorruptFileError, FileNotFoundError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
