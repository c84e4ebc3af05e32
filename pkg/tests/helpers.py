"""Shared test utilities: finite-difference gradient oracles, brute-force
morphology, and naive double-precision metric references.

The FD harness evaluates the checked function twice: analytically in
float32 (the production path) and numerically in float64 through the same
kernels, perturbing one input component at a time with central differences.
Comparisons use max-norm relative error with a small denominator floor to
avoid 0/0 on components that are exactly zero on both sides.
"""

from __future__ import annotations

import math

import numpy as np

from tlp.blocks import ParamStore
from tlp.tensor import Tensor

FD_H = 1e-3
REL_TOL = 1e-3
# Components smaller than the floor are held to |a - b| < REL_TOL * floor
# (1e-6 absolute): the float32 production path cannot resolve cancellation-
# small gradient components more finely than that against a float64 oracle.
DENOM_FLOOR = 1e-3


def rel_err(a: np.ndarray, b: np.ndarray, floor: float = DENOM_FLOOR) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    den = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / den).max())


class _cast_params:
    """Temporarily cast every tensor of the given stores to a dtype."""

    def __init__(self, stores, dtype):
        self.stores = stores
        self.dtype = dtype

    def __enter__(self):
        self.saved = [{p: t.data for p, t in store.items()} for store in self.stores]
        for store in self.stores:
            for t in store.tensors():
                t.data = t.data.astype(self.dtype)
        return self

    def __exit__(self, *exc):
        for store, saved in zip(self.stores, self.saved):
            for p, t in store.items():
                t.data = saved[p]
        return False


def _central_diff(evaluate, set_value, orig: float, h: float) -> float:
    """Fourth-order central difference at step h (5-point stencil). The
    higher-order stencil removes the truncation error that a 2-point stencil
    at the mandated h shows on high-curvature loss surfaces."""
    set_value(orig + 2 * h)
    f_p2 = evaluate()
    set_value(orig + h)
    f_p1 = evaluate()
    set_value(orig - h)
    f_m1 = evaluate()
    set_value(orig - 2 * h)
    f_m2 = evaluate()
    set_value(orig)
    return (-f_p2 + 8.0 * f_p1 - 8.0 * f_m1 + f_m2) / (12.0 * h)


def fd_max_rel_err(fn, arrays, h: float = FD_H, proj_seed: int = 0,
                   stores: tuple[ParamStore, ...] = ()) -> float:
    """Max relative error between analytic and FD gradients w.r.t. every
    element of every input array. ``fn`` maps a list of Tensors to a Tensor."""
    tensors = [Tensor(np.asarray(a, dtype=np.float32), requires_grad=True) for a in arrays]
    out = fn(tensors)
    proj = np.random.default_rng(proj_seed).standard_normal(out.shape)
    loss = (out * Tensor(proj.astype(np.float32))).sum()
    loss.backward()
    analytic = [t.grad.astype(np.float64) for t in tensors]

    def loss64(arrs):
        ts = [Tensor(a, dtype=np.float64) for a in arrs]
        return float((fn(ts).data * proj).sum())

    worst = 0.0
    with _cast_params(stores, np.float64):
        for i in range(len(arrays)):
            base = [np.asarray(a, dtype=np.float64).copy() for a in arrays]
            fd = np.zeros_like(base[i])
            it = np.nditer(base[i], flags=["multi_index"])
            for _ in it:
                idx = it.multi_index

                def set_value(v, idx=idx):
                    base[i][idx] = v

                fd[idx] = _central_diff(lambda: loss64(base), set_value, base[i][idx], h)
            worst = max(worst, rel_err(analytic[i], fd))
    return worst


def fd_param_normwise_rel_err(loss_fn, stores, components: list[tuple], h: float = FD_H) -> float:
    """Normwise relative FD error of d(loss)/d(param component) over the
    chosen (store, path, index) triples: max |analytic - fd| divided by the
    max gradient magnitude in the sample.

    Normwise (not per-component) because the full network contains kinked
    paths (elementwise max in local fusion, leaky units in the
    discriminator): at the mandated step size an FD probe of a near-zero
    component inevitably steps across kinks elsewhere in the network, which
    caps the achievable per-component agreement at an absolute (not
    relative) level. ``loss_fn`` takes no arguments; it reads the stores'
    tensors."""
    for store in stores:
        for t in store.tensors():
            t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = []
    for store, path, idx in components:
        g = store[path].grad
        analytic.append(0.0 if g is None else float(g[idx]))

    fds = []
    with _cast_params(stores, np.float64):
        for store, path, idx in components:
            t = store[path]

            def set_value(v, t=t, idx=idx):
                t.data[idx] = v

            evaluate = lambda: float(loss_fn().data)
            orig = float(t.data[idx])
            probe = _central_diff(evaluate, set_value, orig, h)
            # smooth components agree with an eighth-step probe to ~1e-9;
            # any visible disagreement means the stencil straddled a kink
            # (L1 / max / leaky), where FD converges first-order -- refine
            check = _central_diff(evaluate, set_value, orig, h / 8)
            if abs(probe - check) > 1e-4 * max(abs(probe), abs(check), DENOM_FLOOR):
                probe = _central_diff(evaluate, set_value, orig, h / 64)
            fds.append(probe)
    ga = np.asarray(analytic)
    gf = np.asarray(fds)
    scale = max(float(np.abs(ga).max()), float(np.abs(gf).max()), DENOM_FLOOR)
    return float(np.abs(ga - gf).max() / scale)


# -- brute-force morphology oracle ------------------------------------------------


def brute_force_scale(mask: np.ndarray, kernel: np.ndarray, mode: str) -> np.ndarray:
    """Per-pixel correlation with explicit loops; zero outside the grid."""
    h, w = mask.shape
    out = np.zeros_like(mask)
    need = kernel.sum() if mode == "erode" else 1
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(3):
                for j in range(3):
                    yy, xx = y + i - 1, x + j - 1
                    if kernel[i, j] and 0 <= yy < h and 0 <= xx < w and mask[yy, xx] > 0:
                        acc += 1.0
            out[y, x] = 1.0 if acc >= need else 0.0
    return out


def pixel_set(mask: np.ndarray) -> set[tuple[int, int]]:
    return {(int(y), int(x)) for y, x in zip(*np.nonzero(mask))}


# -- naive double-precision metric references ---------------------------------------


def psnr_reference(y_hat: np.ndarray, y: np.ndarray, cap: float = 100.0) -> float:
    a = (np.asarray(y_hat, dtype=np.float64) + 1.0) / 2.0
    b = (np.asarray(y, dtype=np.float64) + 1.0) / 2.0
    mse = 0.0
    flat_a, flat_b = a.reshape(-1), b.reshape(-1)
    for i in range(flat_a.size):
        d = flat_a[i] - flat_b[i]
        mse += d * d
    mse /= flat_a.size
    if mse <= 10.0 ** (-cap / 10.0):
        return cap
    return 10.0 * math.log10(1.0 / mse)


def nmse_reference(y_hat: np.ndarray, y: np.ndarray) -> float:
    a = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    b = np.asarray(y, dtype=np.float64).reshape(-1)
    num = den = 0.0
    for i in range(a.size):
        num += (a[i] - b[i]) ** 2
        den += b[i] ** 2
    return num / den


def ssim_reference(y_hat: np.ndarray, y: np.ndarray, window: int = 11,
                   sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Window-by-window SSIM with explicit loops and inline Gaussian weights."""
    a = (np.asarray(y_hat, dtype=np.float64) + 1.0) / 2.0
    b = (np.asarray(y, dtype=np.float64) + 1.0) / 2.0
    h, w = a.shape
    half = (window - 1) / 2.0
    weights = np.zeros((window, window))
    for i in range(window):
        for j in range(window):
            weights[i, j] = math.exp(-(((i - half) ** 2) + ((j - half) ** 2)) / (2 * sigma * sigma))
    weights /= weights.sum()
    c1, c2 = k1 * k1, k2 * k2
    total, count = 0.0, 0
    for y0 in range(h - window + 1):
        for x0 in range(w - window + 1):
            wa = a[y0 : y0 + window, x0 : x0 + window]
            wb = b[y0 : y0 + window, x0 : x0 + window]
            mu1 = float((weights * wa).sum())
            mu2 = float((weights * wb).sum())
            var1 = float((weights * wa * wa).sum()) - mu1 * mu1
            var2 = float((weights * wb * wb).sum()) - mu2 * mu2
            cov = float((weights * wa * wb).sum()) - mu1 * mu2
            total += ((2 * mu1 * mu2 + c1) * (2 * cov + c2)) / ((mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2))
            count += 1
    return total / count
