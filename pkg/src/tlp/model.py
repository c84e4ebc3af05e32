"""The synthesis model: dual-branch multi-scale generator, PatchGAN
discriminator, least-squares adversarial losses, and checkpoint I/O.

Generator pipeline (dual-input): each branch embeds concat(image, prompt)
with a 3x3 conv, runs transformer blocks per resolution level with local
fusion feeding the skip connections, downsamples between levels, applies
query-exchanged global fusion at the bottleneck followed by a local fusion
merge, then decodes with upsampling, 1x1 skip merges, transformer blocks and
a tanh head. The single-input variant drops branch 2 entirely and replaces
every fusion with the identity, so no branch-2 parameters exist at all.

The prompt enters as an extra input channel on every active branch; an
all-zero prompt is the documented "no prompt" mode.

The discriminator is an unconditional patch ladder: 4x4 convolutions with
strides 2,2,2,1,1 and LeakyReLU(0.2) between, emitting one logit per
overlapping patch (no sigmoid; the objective is least-squares).

Checkpoint container ("TLPC", version 1):

    magic b"TLPC" | u32 version | u32 json_len | config JSON (UTF-8)
    u32 n_params | repeat: u32 path_len | path UTF-8 | TLPT blob

The JSON records the model kind, its config, the init seed and the
parameter order; loading rebuilds the architecture from the config and
verifies every stored tensor against the expected shape.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .blocks import Conv, Downsample, ParamStore, TransformerBlock, Upsample
from .errors import (
    CorruptHeader,
    FormatVersionMismatch,
    IOFailure,
    NonDivisibleExtent,
    ShapeMismatch,
)
from .fusion import GlobalFusion, LocalFusion
from .io import atomic_write, read_tlpt_stream, write_tlpt_stream
from .tensor import Tensor, concat, leaky_relu, mean, tanh

CKPT_MAGIC = b"TLPC"
CKPT_VERSION = 1


# -- configs ---------------------------------------------------------------------


@dataclass
class GeneratorConfig:
    input_channels_per_branch: int = 2  # image + prompt
    base_channels: int = 16
    levels: int = 2
    blocks_per_level: Optional[list[int]] = None  # encoder levels + bottleneck
    heads_per_level: Optional[list[int]] = None
    decoder_blocks_per_level: Optional[list[int]] = None
    ffn_expansion: float = 2.66
    single_input: bool = False

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.blocks_per_level is None:
            self.blocks_per_level = [2] * (self.levels + 1)
        if self.heads_per_level is None:
            self.heads_per_level = [2 ** i for i in range(self.levels + 1)]
        if self.decoder_blocks_per_level is None:
            self.decoder_blocks_per_level = [2] * self.levels
        if len(self.blocks_per_level) != self.levels + 1:
            raise ValueError("blocks_per_level needs levels+1 entries")
        if len(self.heads_per_level) != self.levels + 1:
            raise ValueError("heads_per_level needs levels+1 entries")
        if len(self.decoder_blocks_per_level) != self.levels:
            raise ValueError("decoder_blocks_per_level needs levels entries")

    def channels_at(self, level: int) -> int:
        return self.base_channels * (2 ** level)


@dataclass
class DiscriminatorConfig:
    in_channels: int = 1
    base_channels: int = 16
    strides: tuple = (2, 2, 2, 1, 1)


@dataclass
class LossConfig:
    lambda_pix: float = 100.0

    def __post_init__(self):
        if self.lambda_pix < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lambda_pix}")


# -- generator ---------------------------------------------------------------------


class Generator:
    """Holds the config snapshot plus all parameters in a flat store."""

    kind = "generator"

    def __init__(self, config: GeneratorConfig, seed: int = 0):
        self.config = config
        self.init_seed = seed
        self.store = ParamStore()
        cfg = config
        branches = (1,) if cfg.single_input else (1, 2)
        s = self.store

        self.embed = {}
        self.enc_blocks = {}
        self.downs = {}
        for b in branches:
            self.embed[b] = Conv(s, f"b{b}.embed", cfg.input_channels_per_branch, cfg.base_channels, 3, seed)
            for lv in range(cfg.levels + 1):
                c = cfg.channels_at(lv)
                self.enc_blocks[b, lv] = [
                    TransformerBlock(s, f"b{b}.enc{lv}.blk{i}", c, cfg.heads_per_level[lv], seed, cfg.ffn_expansion)
                    for i in range(cfg.blocks_per_level[lv])
                ]
                if lv < cfg.levels:
                    self.downs[b, lv] = Downsample(s, f"b{b}.down{lv}", c, seed)

        self.skip_fusion = {}
        self.global_fusion = None
        self.bottleneck_fusion = None
        if not cfg.single_input:
            for lv in range(cfg.levels):
                self.skip_fusion[lv] = LocalFusion(s, f"lf{lv}", cfg.channels_at(lv), seed)
            cb = cfg.channels_at(cfg.levels)
            self.global_fusion = GlobalFusion(s, "gf", cb, cfg.heads_per_level[cfg.levels], seed)
            self.bottleneck_fusion = LocalFusion(s, "lf_bottleneck", cb, seed)

        self.ups = {}
        self.skip_merge = {}
        self.dec_blocks = {}
        for lv in reversed(range(cfg.levels)):
            c = cfg.channels_at(lv)
            self.ups[lv] = Upsample(s, f"up{lv}", 2 * c, seed)
            self.skip_merge[lv] = Conv(s, f"merge{lv}", 2 * c, c, 1, seed)
            self.dec_blocks[lv] = [
                TransformerBlock(s, f"dec{lv}.blk{i}", c, cfg.heads_per_level[lv], seed, cfg.ffn_expansion)
                for i in range(cfg.decoder_blocks_per_level[lv])
            ]
        self.head = Conv(s, "head", cfg.base_channels, 1, 3, seed, bias=True)

    def parameters(self):
        return self.store.tensors()

    def forward(self, x1: Tensor, x2: Optional[Tensor], prompt: Tensor,
                prompt2: Optional[Tensor] = None) -> Tensor:
        cfg = self.config
        b, c, h, w = x1.shape
        factor = 2 ** cfg.levels
        if h % factor or w % factor:
            raise NonDivisibleExtent(f"extents {h}x{w} not divisible by {factor}")
        if prompt.shape != x1.shape:
            raise ShapeMismatch(f"prompt {prompt.shape} vs image {x1.shape}")
        if cfg.single_input:
            if x2 is not None:
                raise ShapeMismatch("single-input model got a second modality")
            return self._forward_single(x1, prompt)
        if x2 is None:
            raise ShapeMismatch("dual-input model needs both modalities")
        if x2.shape != x1.shape:
            raise ShapeMismatch(f"modality shapes differ: {x1.shape} vs {x2.shape}")
        return self._forward_dual(x1, x2, prompt, prompt if prompt2 is None else prompt2)

    __call__ = forward

    def _encode(self, branch: int, x: Tensor) -> list[Tensor]:
        """Per-level features of one branch, bottleneck last."""
        cfg = self.config
        feats = []
        f = self.embed[branch](x)
        for lv in range(cfg.levels + 1):
            for blk in self.enc_blocks[branch, lv]:
                f = blk(f)
            feats.append(f)
            if lv < cfg.levels:
                f = self.downs[branch, lv](f)
        return feats

    def _decode(self, bottleneck: Tensor, skips: list[Tensor]) -> Tensor:
        cfg = self.config
        f = bottleneck
        for lv in reversed(range(cfg.levels)):
            f = self.ups[lv](f)
            f = self.skip_merge[lv](concat([f, skips[lv]], axis=1))
            for blk in self.dec_blocks[lv]:
                f = blk(f)
        return tanh(self.head(f))

    def _forward_dual(self, x1, x2, prompt1, prompt2):
        feats1 = self._encode(1, concat([x1, prompt1], axis=1))
        feats2 = self._encode(2, concat([x2, prompt2], axis=1))
        skips = [self.skip_fusion[lv](feats1[lv], feats2[lv]) for lv in range(self.config.levels)]
        g1, g2 = self.global_fusion(feats1[-1], feats2[-1])
        return self._decode(self.bottleneck_fusion(g1, g2), skips)

    def _forward_single(self, x1, prompt):
        feats = self._encode(1, concat([x1, prompt], axis=1))
        return self._decode(feats[-1], feats[: self.config.levels])


# -- discriminator -------------------------------------------------------------------


class Discriminator:
    """Patch-level real/fake scorer; output is one logit per patch."""

    kind = "discriminator"

    def __init__(self, config: DiscriminatorConfig | None = None, seed: int = 0):
        self.config = config or DiscriminatorConfig()
        self.init_seed = seed
        self.store = ParamStore()
        cfg = self.config
        cin = cfg.in_channels
        self.convs = []
        c = cfg.base_channels
        for i, stride in enumerate(cfg.strides):
            cout = 1 if i == len(cfg.strides) - 1 else c * (2 ** i)
            self.convs.append(Conv(self.store, f"d{i}", cin, cout, 4, seed, stride=stride, padding=1, bias=True))
            cin = cout

    def parameters(self):
        return self.store.tensors()

    def forward(self, y: Tensor) -> Tensor:
        f = y
        for conv in self.convs[:-1]:
            f = leaky_relu(conv(f), 0.2)
        return self.convs[-1](f)

    __call__ = forward


# -- losses ---------------------------------------------------------------------------


def generator_loss(d_fake: Tensor, y_hat: Tensor, y: Tensor, cfg: LossConfig) -> Tensor:
    """mean((D(yhat) - 1)^2) + lambda * mean(|yhat - y|)."""
    if y_hat.shape != y.shape:
        raise ShapeMismatch(f"generator_loss: {y_hat.shape} vs {y.shape}")
    adv = mean((d_fake - 1.0).square())
    pix = mean((y_hat - y).abs())
    return adv + cfg.lambda_pix * pix


def discriminator_loss(d_fake: Tensor, d_real: Tensor) -> Tensor:
    """mean(D(yhat)^2) + mean((D(y) - 1)^2)."""
    if d_fake.shape != d_real.shape:
        raise ShapeMismatch(f"discriminator_loss: {d_fake.shape} vs {d_real.shape}")
    return mean(d_fake.square()) + mean((d_real - 1.0).square())


# -- checkpointing ----------------------------------------------------------------------


def _config_to_dict(model) -> dict:
    cfg = asdict(model.config)
    if isinstance(model.config, DiscriminatorConfig):
        cfg["strides"] = list(model.config.strides)
    return {
        "format": "tlp-checkpoint",
        "kind": model.kind,
        "config": cfg,
        "init_seed": model.init_seed,
        "params": model.store.paths(),
    }


def save_checkpoint(model, path: str) -> None:
    """Serialize config + every parameter; bit-exact on round-trip."""
    header = json.dumps(_config_to_dict(model), sort_keys=True).encode("utf-8")

    def writer(fh):
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(model.store)))
        for p, t in model.store.items():
            encoded = p.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            write_tlpt_stream(fh, t.data)

    atomic_write(path, writer)


def load_checkpoint(path: str):
    """Rebuild the model from its stored config; verify shapes and coverage."""
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != CKPT_MAGIC:
                raise CorruptHeader(f"bad checkpoint magic {magic!r}")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != CKPT_VERSION:
                raise FormatVersionMismatch(f"checkpoint version {version}, expected {CKPT_VERSION}")
            (hlen,) = struct.unpack("<I", fh.read(4))
            meta = json.loads(fh.read(hlen).decode("utf-8"))
            (n,) = struct.unpack("<I", fh.read(4))
            blobs = {}
            for _ in range(n):
                (plen,) = struct.unpack("<I", fh.read(4))
                key = fh.read(plen).decode("utf-8")
                blobs[key] = read_tlpt_stream(fh)
    except (struct.error, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptHeader(f"unreadable checkpoint {path}: {exc}") from exc
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc

    kind = meta.get("kind")
    if kind == "generator":
        model = Generator(GeneratorConfig(**meta["config"]), seed=meta.get("init_seed", 0))
    elif kind == "discriminator":
        cfg = dict(meta["config"])
        cfg["strides"] = tuple(cfg["strides"])
        model = Discriminator(DiscriminatorConfig(**cfg), seed=meta.get("init_seed", 0))
    else:
        raise CorruptHeader(f"unknown model kind {kind!r}")

    expected = set(model.store.paths())
    if expected != set(blobs):
        missing = sorted(expected - set(blobs))[:3]
        extra = sorted(set(blobs) - expected)[:3]
        raise ShapeMismatch(f"parameter set mismatch (missing {missing}, unexpected {extra})")
    for key, arr in blobs.items():
        target = model.store[key]
        if target.shape != arr.shape:
            raise ShapeMismatch(f"{key}: stored {arr.shape}, config implies {target.shape}")
        target.data = arr.astype(np.float32)
    return model
