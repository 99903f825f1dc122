"""Encoders, decoders, latent fusion, and checkpointing.

Three encoders produce latent blocks on a shared spatial grid: the UNet
encoder on the multispectral patch (with skip connections), a narrow
geo encoder on the coordinate grid, and the context autoencoder's encoder.
Their channel-wise concatenation feeds the UNet decoder, which emits raw
logits; the baseline variant bypasses fusion and decodes the patch latent
alone.

Public single-sample ops use h x w x c arrays to match the file formats;
internally everything is batched NCHW.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, CorruptFileError, FusionError, ShapeError
from .layers import Conv1x1, ConvBlock, ConvT2x2, MaxPool2x2, Sigmoid, UpNearest2x
from .ntsr import read_tensor, write_tensor

VARIANTS = ("baseline", "proposed", "autoencoder")
CHECKPOINT_VERSION = 1
MANIFEST_NAME = "checkpoint.txt"


@dataclass(frozen=True)
class ArchConfig:
    patch_size: int = 64
    context_size: int = 256
    in_bands: int = 10
    context_bands: int = 3
    geo_bands: int = 3
    channel_ladder: tuple = (8, 16, 32, 64)
    geo_latent_channels: int = 8
    unet_pools: int = 3
    ae_pools: int = 5

    def __post_init__(self):
        if self.context_size != 4 * self.patch_size:
            raise ConfigError(
                f"context_size {self.context_size} != 4 * patch_size {self.patch_size}")
        if len(self.channel_ladder) != self.unet_pools + 1:
            raise ConfigError(
                f"ladder of {len(self.channel_ladder)} blocks needs "
                f"{len(self.channel_ladder) - 1} pools, configured {self.unet_pools}")
        if self.patch_size % (1 << self.unet_pools) or self.context_size % (1 << self.ae_pools):
            raise ConfigError("extents must be divisible by 2^pools")
        if self.patch_size >> self.unet_pools != self.context_size >> self.ae_pools:
            raise ConfigError(
                "latent grids differ: patch "
                f"{self.patch_size >> self.unet_pools} vs context "
                f"{self.context_size >> self.ae_pools}")

    @property
    def latent_hw(self) -> int:
        return self.patch_size >> self.unet_pools

    @property
    def latent_channels(self) -> int:
        return self.channel_ladder[-1]

    @property
    def fused_channels(self) -> int:
        return 2 * self.channel_ladder[-1] + self.geo_latent_channels

    @property
    def ae_channels(self) -> tuple:
        return (math.ceil(self.channel_ladder[0] / 2),) + tuple(self.channel_ladder)

    @property
    def geo_ladder(self) -> tuple:
        g = self.geo_latent_channels
        half = max(1, math.ceil(g / 2))
        return (half,) * (len(self.channel_ladder) - 2) + (g, g)


def paper_arch() -> ArchConfig:
    """Full published scale (256-pixel patches, 1024-pixel context tiles)."""
    return ArchConfig(patch_size=256, context_size=1024,
                      channel_ladder=(64, 128, 256, 512), geo_latent_channels=64)


def _collect(children):
    out = {}
    for name, child in children:
        for k, v in child.params().items():
            out[f"{name}.{k}"] = v
    return out


def _collect_grads(children):
    out = {}
    for name, child in children:
        for k, v in child.grads().items():
            out[f"{name}.{k}"] = v
    return out


class UNetEncoder:
    """Conv blocks over the patch with max-pool halvings; keeps skips."""

    def __init__(self, arch: ArchConfig, rng, dtype=np.float32):
        ladder = arch.channel_ladder
        chans = [arch.in_bands] + list(ladder)
        self.blocks = [ConvBlock(chans[i], chans[i + 1], rng, dtype)
                       for i in range(len(ladder))]
        self._pools = [MaxPool2x2() for _ in range(len(ladder) - 1)]

    def forward(self, x, train=True):
        skips = []
        for i, block in enumerate(self.blocks[:-1]):
            x = block.forward(x, train)
            skips.append(x)
            x = self._pools[i].forward(x, train)
        latent = self.blocks[-1].forward(x, train)
        return skips, latent

    def backward(self, dlatent, dskips):
        dx = self.blocks[-1].backward(dlatent)
        for i in reversed(range(len(self.blocks) - 1)):
            dx = self._pools[i].backward(dx)
            dx = dx + dskips[i]
            dx = self.blocks[i].backward(dx)
        return dx

    def children(self):
        return [(f"block{i + 1}", b) for i, b in enumerate(self.blocks)]

    def params(self):
        return _collect(self.children())

    def grads(self):
        return _collect_grads(self.children())

    def batchnorms(self):
        return [bn for _, b in self.children() for bn in b.batchnorms()]


class GeoEncoder:
    """Same block/pool structure as the UNet encoder, narrow ladder, no skips."""

    def __init__(self, arch: ArchConfig, rng, dtype=np.float32):
        chans = [arch.geo_bands] + list(arch.geo_ladder)
        self.blocks = [ConvBlock(chans[i], chans[i + 1], rng, dtype)
                       for i in range(len(chans) - 1)]
        self._pools = [MaxPool2x2() for _ in range(len(self.blocks) - 1)]

    def forward(self, x, train=True):
        for i, block in enumerate(self.blocks[:-1]):
            x = block.forward(x, train)
            x = self._pools[i].forward(x, train)
        return self.blocks[-1].forward(x, train)

    def backward(self, dlatent):
        dx = self.blocks[-1].backward(dlatent)
        for i in reversed(range(len(self.blocks) - 1)):
            dx = self._pools[i].backward(dx)
            dx = self.blocks[i].backward(dx)
        return dx

    def children(self):
        return [(f"block{i + 1}", b) for i, b in enumerate(self.blocks)]

    def params(self):
        return _collect(self.children())

    def grads(self):
        return _collect_grads(self.children())

    def batchnorms(self):
        return [bn for _, b in self.children() for bn in b.batchnorms()]


class AEEncoder:
    """Five conv-pool stages taking the context tile down 32x."""

    def __init__(self, arch: ArchConfig, rng, dtype=np.float32):
        chans = [arch.context_bands] + list(arch.ae_channels)
        self.blocks = [ConvBlock(chans[i], chans[i + 1], rng, dtype)
                       for i in range(len(chans) - 1)]
        self._pools = [MaxPool2x2() for _ in self.blocks]

    def forward(self, x, train=True):
        for block, pool in zip(self.blocks, self._pools):
            x = pool.forward(block.forward(x, train), train)
        return x

    def backward(self, dlatent):
        dx = dlatent
        for block, pool in zip(reversed(self.blocks), reversed(self._pools)):
            dx = block.backward(pool.backward(dx))
        return dx

    def children(self):
        return [(f"block{i + 1}", b) for i, b in enumerate(self.blocks)]

    def params(self):
        return _collect(self.children())

    def grads(self):
        return _collect_grads(self.children())

    def batchnorms(self):
        return [bn for _, b in self.children() for bn in b.batchnorms()]


class AEDecoder:
    """Mirror of the AE encoder: nearest-upsample + conv stages, sigmoid head."""

    def __init__(self, arch: ArchConfig, rng, dtype=np.float32):
        enc = arch.ae_channels
        outs = list(enc[:-1][::-1]) + [enc[0]]
        chans = [enc[-1]] + outs
        self.ups = [UpNearest2x() for _ in outs]
        self.blocks = [ConvBlock(chans[i], chans[i + 1], rng, dtype)
                       for i in range(len(outs))]
        self.head = Conv1x1(chans[-1], arch.context_bands, rng, dtype)
        self.act = Sigmoid()

    def forward(self, x, train=True):
        for up, block in zip(self.ups, self.blocks):
            x = block.forward(up.forward(x, train), train)
        return self.act.forward(self.head.forward(x, train), train)

    def backward(self, dy):
        dx = self.head.backward(self.act.backward(dy))
        for up, block in zip(reversed(self.ups), reversed(self.blocks)):
            dx = up.backward(block.backward(dx))
        return dx

    def children(self):
        return ([(f"block{i + 1}", b) for i, b in enumerate(self.blocks)]
                + [("head", self.head)])

    def params(self):
        return _collect(self.children())

    def grads(self):
        return _collect_grads(self.children())

    def batchnorms(self):
        return [bn for _, b in self.children() if isinstance(b, ConvBlock)
                for bn in b.batchnorms()]


class UNetDecoder:
    """Transposed-conv upsampling with skip concatenation; raw-logit head."""

    def __init__(self, arch: ArchConfig, in_channels: int, rng, dtype=np.float32):
        ladder = arch.channel_ladder
        self.in_channels = in_channels
        self.upconvs = []
        self.blocks = []
        cur = in_channels
        for i in reversed(range(len(ladder) - 1)):
            self.upconvs.append(ConvT2x2(cur, ladder[i], rng, dtype))
            self.blocks.append(ConvBlock(2 * ladder[i], ladder[i], rng, dtype))
            cur = ladder[i]
        self.head = Conv1x1(cur, 1, rng, dtype)

    def forward(self, x, skips, train=True):
        if x.shape[1] != self.in_channels:
            raise ShapeError(
                f"decoder configured for {self.in_channels} input channels, "
                f"got {x.shape[1]}")
        self._skip_channels = [s.shape[1] for s in reversed(skips)]
        for up, block, skip in zip(self.upconvs, self.blocks, reversed(skips)):
            x = up.forward(x, train)
            if x.shape[2:] != skip.shape[2:]:
                raise ShapeError(
                    f"skip grid {skip.shape[2:]} does not match upsampled {x.shape[2:]}")
            x = block.forward(np.concatenate([x, skip], axis=1), train)
        return self.head.forward(x, train)

    def backward(self, dy):
        """Returns (dx at decoder input, dskips ordered as the encoder emitted them)."""
        dskips = []
        dx = self.head.backward(dy)
        for up, block, cs in zip(reversed(self.upconvs), reversed(self.blocks),
                                 self._skip_channels[::-1]):
            dcat = block.backward(dx)
            dskips.append(np.ascontiguousarray(dcat[:, dcat.shape[1] - cs:]))
            dx = up.backward(np.ascontiguousarray(dcat[:, :dcat.shape[1] - cs]))
        return dx, dskips

    def children(self):
        out = []
        for i, (up, block) in enumerate(zip(self.upconvs, self.blocks)):
            out.append((f"up{i + 1}", up))
            out.append((f"block{i + 1}", block))
        out.append(("head", self.head))
        return out

    def params(self):
        return _collect(self.children())

    def grads(self):
        return _collect_grads(self.children())

    def batchnorms(self):
        return [bn for _, b in self.children() if isinstance(b, ConvBlock)
                for bn in b.batchnorms()]


_COMPONENT_BUILD_ORDER = ("unet_enc", "unet_dec", "ae_enc", "ae_dec", "geo_enc")

_VARIANT_COMPONENTS = {
    "baseline": ("unet_enc", "unet_dec"),
    "proposed": ("unet_enc", "unet_dec", "ae_enc", "geo_enc"),
    "autoencoder": ("ae_enc", "ae_dec"),
}


@dataclass
class ModelBundle:
    arch: ArchConfig
    variant: str
    components: dict
    frozen: set = field(default_factory=set)

    def component(self, name):
        if name not in self.components:
            raise ConfigError(f"bundle has no component {name!r} "
                              f"(variant {self.variant})")
        return self.components[name]

    def params(self, component: str):
        return self.component(component).params()

    def all_params(self):
        out = {}
        for name in _COMPONENT_BUILD_ORDER:
            if name in self.components:
                for k, v in self.components[name].params().items():
                    out[f"{name}.{k}"] = v
        return out

    def trainable_params(self):
        """Parameters the optimizer may touch: unfrozen, non-statistics."""
        out = {}
        for name in _COMPONENT_BUILD_ORDER:
            if name in self.components and name not in self.frozen:
                for k, v in self.components[name].params().items():
                    if not k.endswith(("running_mean", "running_var")):
                        out[f"{name}.{k}"] = v
        return out

    def grads(self):
        out = {}
        for name in _COMPONENT_BUILD_ORDER:
            if name in self.components and name not in self.frozen:
                for k, v in self.components[name].grads().items():
                    out[f"{name}.{k}"] = v
        return out


def init_parameters(arch: ArchConfig, seed: int, variant: str = "proposed",
                    dtype=np.float32) -> ModelBundle:
    """Build a bundle with Kaiming conv weights, zero biases, unit BN scales."""
    if variant not in _VARIANT_COMPONENTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    rng = np.random.default_rng(seed)
    wanted = _VARIANT_COMPONENTS[variant]
    comps = {}
    for name in _COMPONENT_BUILD_ORDER:
        if name not in wanted:
            continue
        if name == "unet_enc":
            comps[name] = UNetEncoder(arch, rng, dtype)
        elif name == "unet_dec":
            width = arch.fused_channels if variant == "proposed" else arch.latent_channels
            comps[name] = UNetDecoder(arch, width, rng, dtype)
        elif name == "ae_enc":
            comps[name] = AEEncoder(arch, rng, dtype)
        elif name == "ae_dec":
            comps[name] = AEDecoder(arch, rng, dtype)
        elif name == "geo_enc":
            comps[name] = GeoEncoder(arch, rng, dtype)
    return ModelBundle(arch=arch, variant=variant, components=comps)


def freeze(bundle: ModelBundle, component: str) -> ModelBundle:
    """Exempt a component from parameter updates and BN statistic updates."""
    comp = bundle.component(component)
    bundle.frozen.add(component)
    for bn in comp.batchnorms():
        bn.frozen_stats = True
    return bundle


def freeze_all_batchnorm_stats(bundle: ModelBundle) -> None:
    """Pin every BN layer to its running statistics (gradient-check harness)."""
    for comp in bundle.components.values():
        for bn in comp.batchnorms():
            bn.frozen_stats = True


# ---------------------------------------------------------------------------
# single-sample public ops (h x w x c in, h x w x c out)
# ---------------------------------------------------------------------------

def _to_nchw(hwc, dtype):
    a = np.asarray(hwc, dtype=dtype)
    if a.ndim != 3:
        raise ShapeError(f"expected h x w x c array, got shape {a.shape}")
    return np.ascontiguousarray(np.moveaxis(a, 2, 0))[None]


def _to_hwc(nchw):
    return np.ascontiguousarray(np.moveaxis(nchw[0], 0, 2))


def _dtype_of(bundle):
    comp = next(iter(bundle.components.values()))
    return next(iter(comp.params().values())).dtype


def unet_encoder_forward(bundle: ModelBundle, patch):
    """Patch (h x w x bands) -> (skips as h x w x c list, latent s x s x c)."""
    arch = bundle.arch
    if patch.shape != (arch.patch_size, arch.patch_size, arch.in_bands):
        raise ShapeError(f"patch shape {patch.shape} does not match arch "
                         f"({arch.patch_size}, {arch.patch_size}, {arch.in_bands})")
    x = _to_nchw(patch, _dtype_of(bundle))
    skips, latent = bundle.component("unet_enc").forward(x, train=False)
    return [_to_hwc(s) for s in skips], _to_hwc(latent)


def geo_encoder_forward(bundle: ModelBundle, grid):
    arch = bundle.arch
    if grid.shape != (arch.patch_size, arch.patch_size, arch.geo_bands):
        raise ShapeError(f"geo grid shape {grid.shape} does not match arch")
    x = _to_nchw(grid, _dtype_of(bundle))
    return _to_hwc(bundle.component("geo_enc").forward(x, train=False))


def ae_encoder_forward(bundle: ModelBundle, tile):
    arch = bundle.arch
    if tile.shape != (arch.context_size, arch.context_size, arch.context_bands):
        raise ShapeError(f"context tile shape {tile.shape} does not match arch")
    x = _to_nchw(tile, _dtype_of(bundle))
    return _to_hwc(bundle.component("ae_enc").forward(x, train=False))


def ae_decoder_forward(bundle: ModelBundle, latent):
    x = _to_nchw(latent, _dtype_of(bundle))
    return _to_hwc(bundle.component("ae_dec").forward(x, train=False))


def fuse_latents(l_p, l_c, l_t):
    """Channel-wise concatenation in fixed order (patch, geo, context)."""
    if l_p.shape[:2] != l_c.shape[:2] or l_p.shape[:2] != l_t.shape[:2]:
        raise FusionError(
            f"latent grids differ: patch {l_p.shape}, geo {l_c.shape}, "
            f"context {l_t.shape}")
    return np.concatenate([l_p, l_c, l_t], axis=2)


def unet_decoder_forward(bundle: ModelBundle, latent, skips):
    """Latent (s x s x c) + skips -> raw logits (h x w x 1)."""
    dtype = _dtype_of(bundle)
    x = _to_nchw(latent, dtype)
    skips_nchw = [_to_nchw(s, dtype) for s in skips]
    return _to_hwc(bundle.component("unet_dec").forward(x, skips_nchw, train=False))


def predict(bundle: ModelBundle, sample, variant: str):
    """Forward pass per variant; logits clamped to [0, 1] for reporting.

    Water pixels are not treated specially here; masking belongs to the loss
    and the metrics.
    """
    if variant not in ("baseline", "proposed"):
        raise ConfigError(f"cannot predict with variant {variant!r}")
    if variant != bundle.variant:
        raise ConfigError(
            f"bundle is a {bundle.variant!r} model, asked to predict {variant!r}")
    dtype = _dtype_of(bundle)
    x = _to_nchw(sample.patch, dtype)
    skips, l_p = bundle.component("unet_enc").forward(x, train=False)
    if variant == "proposed":
        l_c = bundle.component("geo_enc").forward(
            _to_nchw(sample.geo, dtype), train=False)
        l_t = bundle.component("ae_enc").forward(
            _to_nchw(sample.context, dtype), train=False)
        if l_p.shape[2:] != l_c.shape[2:] or l_p.shape[2:] != l_t.shape[2:]:
            raise FusionError(f"latent grids differ: {l_p.shape} vs {l_c.shape} "
                              f"vs {l_t.shape}")
        latent = np.concatenate([l_p, l_c, l_t], axis=1)
    else:
        latent = l_p
    logits = bundle.component("unet_dec").forward(latent, skips, train=False)
    return np.clip(logits[0, 0], 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# checkpoints: one NTSR file per parameter plus a plain-text manifest
# ---------------------------------------------------------------------------

def save_bundle(bundle: ModelBundle, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"format_version={CHECKPOINT_VERSION}", f"variant={bundle.variant}"]
    a = bundle.arch
    lines += [f"arch.patch_size={a.patch_size}",
              f"arch.context_size={a.context_size}",
              f"arch.in_bands={a.in_bands}",
              f"arch.context_bands={a.context_bands}",
              f"arch.geo_bands={a.geo_bands}",
              "arch.channel_ladder=" + ",".join(str(c) for c in a.channel_ladder),
              f"arch.geo_latent_channels={a.geo_latent_channels}",
              f"arch.unet_pools={a.unet_pools}",
              f"arch.ae_pools={a.ae_pools}",
              "frozen=" + ",".join(sorted(bundle.frozen))]
    for name, arr in bundle.all_params().items():
        fname = name + ".ntsr"
        write_tensor(out / fname, arr.astype(np.float32, copy=False))
        lines.append(f"param,{name},{fname}")
    (out / MANIFEST_NAME).write_text("\n".join(lines) + "\n")


def load_bundle(ckpt_dir, dtype=np.float32) -> ModelBundle:
    path = Path(ckpt_dir)
    manifest = path / MANIFEST_NAME
    if not manifest.is_file():
        raise FileNotFoundError(f"no checkpoint manifest at {manifest}")
    kv = {}
    params = []
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("param,"):
            _, name, fname = line.split(",", 2)
            params.append((name, fname))
        else:
            k, _, v = line.partition("=")
            kv[k] = v
    if kv.get("format_version") != str(CHECKPOINT_VERSION):
        raise CorruptFileError(f"{manifest}: unsupported checkpoint version "
                               f"{kv.get('format_version')!r}")
    arch = ArchConfig(
        patch_size=int(kv["arch.patch_size"]),
        context_size=int(kv["arch.context_size"]),
        in_bands=int(kv["arch.in_bands"]),
        context_bands=int(kv["arch.context_bands"]),
        geo_bands=int(kv["arch.geo_bands"]),
        channel_ladder=tuple(int(c) for c in kv["arch.channel_ladder"].split(",")),
        geo_latent_channels=int(kv["arch.geo_latent_channels"]),
        unet_pools=int(kv["arch.unet_pools"]),
        ae_pools=int(kv["arch.ae_pools"]))
    bundle = init_parameters(arch, seed=0, variant=kv["variant"], dtype=dtype)
    live = bundle.all_params()
    if set(live) != {name for name, _ in params}:
        raise CorruptFileError(f"{manifest}: parameter list does not match the "
                               f"{kv['variant']!r} architecture")
    for name, fname in params:
        arr = read_tensor(path / fname).astype(dtype)
        if arr.shape != live[name].shape:
            raise CorruptFileError(
                f"{manifest}: {name} has shape {arr.shape}, expected {live[name].shape}")
        live[name][...] = arr
    for comp in kv.get("frozen", "").split(","):
        if comp:
            freeze(bundle, comp)
    return bundle


def component_checksum(bundle: ModelBundle, component: str) -> str:
    """SHA-256 over the component's parameters (sorted by name, raw bytes)."""
    comp = bundle.component(component)
    h = hashlib.sha256()
    for name in sorted(comp.params()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(comp.params()[name]).tobytes())
    return h.hexdigest()
