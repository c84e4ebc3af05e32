"""Dual-branch feature fusion operators.

Local fusion compresses concat(f1, f2, max(f1, f2)) back to the branch
width with a 1x1 convolution; the channel order of the concatenation is
fixed (f1, f2, max). The elementwise max breaks gradient ties in favour of
the first argument.

Global fusion exchanges queries between the two branches: each branch's
query attends to the *other* branch's keys and values. Tokens are channels
(same convention as the backbone blocks), so the softmax scaling factor is
the square root of the per-head feature dimension, i.e. the pixel count.
"""

from __future__ import annotations

import math

from .blocks import Conv, split_heads, merge_heads
from .errors import ShapeMismatch
from .ops import matmul, softmax
from .tensor import Tensor, concat, maximum, narrow, transpose


class LocalFusion:
    def __init__(self, store, prefix, c, seed):
        self.channels = c
        self.conv = Conv(store, f"{prefix}.conv", 3 * c, c, 1, seed)

    def __call__(self, f1: Tensor, f2: Tensor) -> Tensor:
        if f1.shape != f2.shape:
            raise ShapeMismatch(f"local fusion: {f1.shape} vs {f2.shape}")
        return self.conv(concat([f1, f2, maximum(f1, f2)], axis=1))


class GlobalFusion:
    """Query-exchanged cross-attention between two equally-shaped branches."""

    def __init__(self, store, prefix, c, heads, seed):
        if c % heads:
            raise ShapeMismatch(f"{c} channels not divisible by {heads} heads")
        self.heads = heads
        self.qkv1 = Conv(store, f"{prefix}.qkv1", c, 3 * c, 1, seed)
        self.qkv2 = Conv(store, f"{prefix}.qkv2", c, 3 * c, 1, seed)

    def _project(self, x: Tensor, proj: Conv):
        b, c, h, w = x.shape
        qkv = proj(x)
        q = split_heads(narrow(qkv, 1, 0, c), self.heads)
        k = split_heads(narrow(qkv, 1, c, c), self.heads)
        v = split_heads(narrow(qkv, 1, 2 * c, c), self.heads)
        return q, k, v

    def __call__(self, f1: Tensor, f2: Tensor, return_weights: bool = False):
        if f1.shape != f2.shape:
            raise ShapeMismatch(f"global fusion: {f1.shape} vs {f2.shape}")
        b, c, h, w = f1.shape
        q1, k1, v1 = self._project(f1, self.qkv1)
        q2, k2, v2 = self._project(f2, self.qkv2)
        scale = 1.0 / math.sqrt(h * w)
        attn_12 = softmax(matmul(q1, transpose(k2, 0, 1, 3, 2)) * scale, axis=3)
        attn_21 = softmax(matmul(q2, transpose(k1, 0, 1, 3, 2)) * scale, axis=3)
        g2 = merge_heads(matmul(attn_12, v2), h, w)
        g1 = merge_heads(matmul(attn_21, v1), h, w)
        if return_weights:
            return (g1, g2), (attn_21, attn_12)
        return g1, g2
