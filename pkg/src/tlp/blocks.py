"""Reusable network blocks: transformer block, layer norm, down/upsampling.

The transformer block follows the efficient image-restoration design the
backbone is built from: attention runs over *channel* tokens (queries, keys
and values are channels; the per-head feature dimension is the pixel count),
so cost grows linearly with image size. Feed-forward is the gated-depthwise
variant (1x1 expand, 3x3 depthwise, GELU gate, 1x1 contract). All trunk
convolutions are bias-free; normalization is bias-free layer norm over the
channel axis.

Parameters live in a flat :class:`ParamStore` keyed by stable path strings
(e.g. ``b1.enc0.blk1.attn.qkv.w``) so checkpoints are order-independent and
diffable. Every weight is initialized from a zero-mean normal (std 0.02)
on a stream derived from (seed, path); norms and temperatures start at one.
"""

from __future__ import annotations

import numpy as np

from .errors import OddExtent, ShapeMismatch
from .ops import (
    conv2d,
    l2_normalize,
    layer_norm_channels,
    matmul,
    scale_per_head,
    softmax,
    upsample_nearest2x,
)
from .rng import mix_seed, normal_array
from .tensor import Tensor, narrow, reshape, transpose


class ParamStore:
    """Flat, ordered mapping of parameter path -> trainable Tensor."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, path: str, array: np.ndarray) -> Tensor:
        if path in self._params:
            raise ValueError(f"duplicate parameter path {path!r}")
        t = Tensor(array, requires_grad=True)
        self._params[path] = t
        return t

    def __getitem__(self, path: str) -> Tensor:
        return self._params[path]

    def __contains__(self, path: str) -> bool:
        return path in self._params

    def __len__(self) -> int:
        return len(self._params)

    def paths(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def count_values(self) -> int:
        return sum(t.size for t in self._params.values())


class Conv:
    """Conv2d wrapper that registers its weight (and optional bias)."""

    def __init__(self, store, prefix, cin, cout, k, seed, stride=1, padding=None,
                 groups=1, bias=False, std=0.02):
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.groups = groups
        self.w = store.add(
            f"{prefix}.w",
            normal_array((cout, cin // groups, k, k), seed=mix_seed(seed, f"{prefix}.w"), std=std),
        )
        self.b = store.add(f"{prefix}.b", np.zeros(cout, dtype=np.float32)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding, groups=self.groups)


class LayerNorm:
    def __init__(self, store, prefix, c):
        self.weight = store.add(f"{prefix}.w", np.ones(c, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm_channels(x, self.weight)


def split_heads(x: Tensor, heads: int) -> Tensor:
    """(B, C, H, W) -> (B, heads, C/heads, H*W): channel tokens per head."""
    b, c, h, w = x.shape
    return reshape(x, b, heads, c // heads, h * w)


def merge_heads(x: Tensor, h: int, w: int) -> Tensor:
    b, heads, ch, _ = x.shape
    return reshape(x, b, heads * ch, h, w)


class ChannelAttention:
    """Multi-head attention over channel tokens with a learnable temperature."""

    def __init__(self, store, prefix, c, heads, seed):
        if c % heads:
            raise ShapeMismatch(f"{c} channels not divisible by {heads} heads")
        self.heads = heads
        self.qkv = Conv(store, f"{prefix}.qkv", c, 3 * c, 1, seed)
        self.qkv_dw = Conv(store, f"{prefix}.qkv_dw", 3 * c, 3 * c, 3, seed, groups=3 * c)
        self.proj = Conv(store, f"{prefix}.proj", c, c, 1, seed)
        self.temperature = store.add(f"{prefix}.temperature", np.ones(heads, dtype=np.float32))

    def __call__(self, x: Tensor, return_weights: bool = False):
        b, c, h, w = x.shape
        qkv = self.qkv_dw(self.qkv(x))
        q = split_heads(narrow(qkv, 1, 0, c), self.heads)
        k = split_heads(narrow(qkv, 1, c, c), self.heads)
        v = split_heads(narrow(qkv, 1, 2 * c, c), self.heads)
        q = l2_normalize(q, axis=3)
        k = l2_normalize(k, axis=3)
        logits = scale_per_head(matmul(q, transpose(k, 0, 1, 3, 2)), self.temperature)
        attn = softmax(logits, axis=3)
        out = self.proj(merge_heads(matmul(attn, v), h, w))
        if return_weights:
            return out, attn
        return out


class GatedFeedForward:
    """1x1 expand -> 3x3 depthwise -> GELU-gated product -> 1x1 contract."""

    def __init__(self, store, prefix, c, seed, expansion=2.66):
        hidden = max(1, int(c * expansion))
        self.hidden = hidden
        self.expand = Conv(store, f"{prefix}.expand", c, 2 * hidden, 1, seed)
        self.dw = Conv(store, f"{prefix}.dw", 2 * hidden, 2 * hidden, 3, seed, groups=2 * hidden)
        self.contract = Conv(store, f"{prefix}.contract", hidden, c, 1, seed)

    def __call__(self, x: Tensor) -> Tensor:
        y = self.dw(self.expand(x))
        gate = narrow(y, 1, 0, self.hidden)
        val = narrow(y, 1, self.hidden, self.hidden)
        return self.contract(gate.gelu() * val)


class TransformerBlock:
    """Pre-norm residual block: x + Attn(LN(x)), then + FFN(LN(.))."""

    def __init__(self, store, prefix, c, heads, seed, expansion=2.66):
        self.channels = c
        self.ln1 = LayerNorm(store, f"{prefix}.ln1", c)
        self.attn = ChannelAttention(store, f"{prefix}.attn", c, heads, seed)
        self.ln2 = LayerNorm(store, f"{prefix}.ln2", c)
        self.ffn = GatedFeedForward(store, f"{prefix}.ffn", c, seed, expansion)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.channels:
            raise ShapeMismatch(f"block expects {self.channels} channels, got {x.shape}")
        x = x + self.attn(self.ln1(x))
        return x + self.ffn(self.ln2(x))


class Downsample:
    """Halve H and W, double channels (3x3 conv, stride 2)."""

    def __init__(self, store, prefix, c, seed):
        self.conv = Conv(store, f"{prefix}.conv", c, 2 * c, 3, seed, stride=2, padding=1)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise OddExtent(f"downsample needs even extents, got {x.shape}")
        return self.conv(x)


class Upsample:
    """Double H and W, halve channels (nearest-neighbour 2x then 3x3 conv)."""

    def __init__(self, store, prefix, c, seed):
        if c % 2:
            raise ShapeMismatch(f"upsample needs an even channel count, got {c}")
        self.conv = Conv(store, f"{prefix}.conv", c, c // 2, 3, seed)

    def __call__(self, x: Tensor) -> Tensor:
        return self.conv(upsample_nearest2x(x))
