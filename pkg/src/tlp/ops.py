"""Linear-algebra and neural-net kernels on top of the autodiff tape.

Convolution uses the cross-correlation convention (no kernel flip), the
same convention as mainstream deep-learning frameworks; it is applied
consistently everywhere in the package, including mask morphology.

Three execution paths keep conv2d fast on CPU:

* 1x1 stride-1 kernels collapse to a batched matmul,
* depthwise kernels run as a shift-and-add over the kh*kw taps,
* everything else goes through im2col + one sgemm.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyOutput, ShapeMismatch
from .tensor import Tensor, make_result

# -- matmul -------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the trailing two axes.

    Leading batch extents must agree exactly (no batch broadcasting).
    """
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeMismatch(f"matmul needs rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)
    ad, bd = a.data, b.data

    def bwd(g):
        ga = np.matmul(g, bd.swapaxes(-1, -2))
        gb = np.matmul(ad.swapaxes(-1, -2), g)
        return (ga, gb)

    return make_result(data, [a, b], bwd)


# -- conv2d -------------------------------------------------------------------


def _conv_out_extent(x: int, k: int, stride: int, padding: int) -> int:
    return (x + 2 * padding - k) // stride + 1


def _pad_spatial(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _conv2d_dense_fwd(x: np.ndarray, w: np.ndarray, stride: int, padding: int) -> np.ndarray:
    b, cin, _, _ = x.shape
    cout, _, kh, kw = w.shape
    xp = _pad_spatial(x, padding)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    col = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, cin * kh * kw)
    out = col @ w.reshape(cout, -1).T
    return out.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2)


def _conv2d_dense_bwd(g, x, w, stride, padding):
    b, cin, h, wdt = x.shape
    cout, _, kh, kw = w.shape
    ho, wo = g.shape[2], g.shape[3]
    xp = _pad_spatial(x, padding)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    col = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, cin * kh * kw)
    gmat = g.transpose(0, 2, 3, 1).reshape(b * ho * wo, cout)
    gw = (gmat.T @ col).reshape(w.shape)
    gcol = gmat @ w.reshape(cout, -1)  # (b*ho*wo, cin*kh*kw)
    gcol = gcol.reshape(b, ho, wo, cin, kh, kw)
    gxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcol[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    gx = gxp if padding == 0 else gxp[:, :, padding:-padding, padding:-padding]
    return gx, gw


def _conv2d_depthwise_fwd(x, w, stride, padding):
    b, c, _, _ = x.shape
    _, _, kh, kw = w.shape
    xp = _pad_spatial(x, padding)
    ho = _conv_out_extent(x.shape[2], kh, stride, padding)
    wo = _conv_out_extent(x.shape[3], kw, stride, padding)
    out = np.zeros((b, c, ho, wo), dtype=x.dtype)
    tmp = np.empty_like(out)
    for i in range(kh):
        for j in range(kw):
            np.multiply(
                xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride],
                w[:, 0, i, j][None, :, None, None],
                out=tmp,
            )
            out += tmp
    return out


def _conv2d_depthwise_bwd(g, x, w, stride, padding):
    _, _, kh, kw = w.shape
    ho, wo = g.shape[2], g.shape[3]
    xp = _pad_spatial(x, padding)
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    if stride == 1:
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
        gw[:, 0] = np.einsum("bchw,bchwij->cij", g, win, optimize=True)
    for i in range(kh):
        for j in range(kw):
            sl = (slice(None), slice(None), slice(i, i + stride * ho, stride), slice(j, j + stride * wo, stride))
            if stride != 1:
                gw[:, 0, i, j] = (g * xp[sl]).sum(axis=(0, 2, 3))
            gxp[sl] += w[:, 0, i, j][None, :, None, None] * g
    gx = gxp if padding == 0 else gxp[:, :, padding:-padding, padding:-padding]
    return gx, gw


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """2-D cross-correlation, NCHW layout, weight layout (Cout, Cin/groups, kh, kw)."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeMismatch(f"conv2d: x {x.shape}, weight {weight.shape}")
    b, cin, h, wdt = x.shape
    cout, cin_g, kh, kw = weight.shape
    if padding < 0 or stride < 1:
        raise ShapeMismatch(f"conv2d: bad stride/padding ({stride}, {padding})")
    if cin % groups or cout % groups or cin_g != cin // groups:
        raise ShapeMismatch(f"conv2d: {cin} in-channels, weight {weight.shape}, groups {groups}")
    ho = _conv_out_extent(h, kh, stride, padding)
    wo = _conv_out_extent(wdt, kw, stride, padding)
    if ho <= 0 or wo <= 0:
        raise EmptyOutput(f"conv2d output would be {ho}x{wo}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeMismatch(f"conv2d bias {bias.shape} for {cout} out-channels")

    xd, wd = x.data, weight.data
    depthwise = groups == cin == cout and cin_g == 1
    if kh == kw == 1 and stride == 1 and padding == 0 and groups == 1:
        data = np.matmul(wd.reshape(cout, cin), xd.reshape(b, cin, h * wdt)).reshape(b, cout, h, wdt)
        mode = "1x1"
    elif depthwise:
        data = _conv2d_depthwise_fwd(xd, wd, stride, padding)
        mode = "dw"
    elif groups == 1:
        data = _conv2d_dense_fwd(xd, wd, stride, padding)
        mode = "dense"
    else:
        cig, cog = cin // groups, cout // groups
        parts = [
            _conv2d_dense_fwd(xd[:, g * cig : (g + 1) * cig], wd[g * cog : (g + 1) * cog], stride, padding)
            for g in range(groups)
        ]
        data = np.concatenate(parts, axis=1)
        mode = "grouped"
    if bias is not None:
        data = data + bias.data[None, :, None, None]

    parents = [x, weight] if bias is None else [x, weight, bias]

    def bwd(g):
        if mode == "1x1":
            gmat = g.reshape(b, cout, h * wdt)
            gx = np.matmul(wd.reshape(cout, cin).T, gmat).reshape(xd.shape)
            gw = np.matmul(gmat, xd.reshape(b, cin, h * wdt).swapaxes(1, 2)).sum(axis=0).reshape(wd.shape)
        elif mode == "dw":
            gx, gw = _conv2d_depthwise_bwd(g, xd, wd, stride, padding)
        elif mode == "dense":
            gx, gw = _conv2d_dense_bwd(g, xd, wd, stride, padding)
        else:
            cig, cog = cin // groups, cout // groups
            gxs, gws = [], []
            for gi in range(groups):
                gxi, gwi = _conv2d_dense_bwd(
                    g[:, gi * cog : (gi + 1) * cog], xd[:, gi * cig : (gi + 1) * cig], wd[gi * cog : (gi + 1) * cog], stride, padding
                )
                gxs.append(gxi)
                gws.append(gwi)
            gx = np.concatenate(gxs, axis=1)
            gw = np.concatenate(gws, axis=0)
        if bias is None:
            return (gx, gw)
        return (gx, gw, g.sum(axis=(0, 2, 3)))

    return make_result(data, parents, bwd)


# -- softmax and normalizations ------------------------------------------------


def softmax(x: Tensor, axis: int) -> Tensor:
    """Numerically stable softmax along one axis (max-subtraction form)."""
    if not -x.data.ndim <= axis < x.data.ndim:
        raise ShapeMismatch(f"softmax axis {axis} for shape {x.shape}")
    out = softmax_forward(x.data, axis)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return make_result(out, [x], bwd)


def softmax_forward(x: np.ndarray, axis: int) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm_channels(x: Tensor, weight: Tensor, eps: float = 1e-5) -> Tensor:
    """Bias-free layer norm over the channel axis of an NCHW tensor.

    Per spatial location: y = x / sqrt(var_c(x) + eps) * w[c]. The mean is
    used only inside the variance (the signal itself is not re-centred).
    """
    if x.data.ndim != 4 or weight.shape != (x.shape[1],):
        raise ShapeMismatch(f"layer_norm: x {x.shape}, weight {weight.shape}")
    xd = x.data
    c = xd.shape[1]
    mu = xd.mean(axis=1, keepdims=True)
    var = ((xd - mu) ** 2).mean(axis=1, keepdims=True)
    r = 1.0 / np.sqrt(var + eps)
    xn = xd * r
    data = xn * weight.data[None, :, None, None]

    def bwd(g):
        # the two gradient terms cancel heavily; do the combine in float64
        g64 = g.astype(np.float64)
        x64 = xd.astype(np.float64)
        r64 = r.astype(np.float64)
        gxn = g64 * weight.data.astype(np.float64)[None, :, None, None]
        # d var / d x = 2 (x - mu) / C; r depends on x through var only
        gr = (gxn * x64).sum(axis=1, keepdims=True) * (-0.5) * r64 ** 3
        gx = (gxn * r64 + gr * 2.0 * (x64 - mu) / c).astype(g.dtype)
        gw = (g * xn).sum(axis=(0, 2, 3))
        return (gx, gw)

    return make_result(data, [x, weight], bwd)


def l2_normalize(x: Tensor, axis: int, eps: float = 1e-8) -> Tensor:
    """x / (||x||_2 + eps) along one axis; zero vectors map to zero."""
    xd = x.data
    norm = np.sqrt((xd * xd).sum(axis=axis, keepdims=True))
    denom = norm + eps
    out = xd / denom

    def bwd(g):
        # d||x||/dx = x/||x||; guard the zero-vector case (out is 0 there anyway)
        safe = np.where(norm > 0, norm, 1.0)
        gdot = (g * xd).sum(axis=axis, keepdims=True)
        return (g / denom - xd * (gdot / (denom * denom * safe)),)

    return make_result(out, [x], bwd)


def scale_per_head(x: Tensor, t: Tensor) -> Tensor:
    """Multiply attention logits (B, heads, m, n) by a per-head factor t[heads]."""
    if x.data.ndim != 4 or t.shape != (x.shape[1],):
        raise ShapeMismatch(f"scale_per_head: x {x.shape}, t {t.shape}")
    tcol = t.data[None, :, None, None]
    data = x.data * tcol

    def bwd(g):
        return (g * tcol, (g * x.data).sum(axis=(0, 2, 3)))

    return make_result(data, [x, t], bwd)


def upsample_nearest2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling of an NCHW tensor."""
    if x.data.ndim != 4:
        raise ShapeMismatch(f"upsample expects NCHW, got {x.shape}")
    data = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    b, c, h, w = x.shape

    def bwd(g):
        return (g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return make_result(data, [x], bwd)
