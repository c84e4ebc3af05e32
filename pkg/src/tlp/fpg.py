"""Fuzzy prompt generation: stochastic morphological scaling of lesion masks.

During training, ROI prompts are derived from segmentation labels by a
convolution-based random scaling procedure: with probability ``q`` the
prompt is dropped (all-zero), otherwise the mask is pushed through ``t``
rounds where each round dilates (probability ``p``) or erodes (otherwise)
with a structuring kernel drawn uniformly from a fixed set of nine.

The kernel set contains the eight "center plus one neighbour" 3x3 kernels
(one per direction) and one 5-cell plus/cross kernel. Masks are correlated
with the kernel under zero padding; dilation keeps pixels where the response
exceeds 0. Erosion keeps pixels only where every kernel cell is covered
(response reaches the kernel's popcount), which shrinks the mask under every
kernel in the set.

RNG contract (needed to replay a generation step by step): a fresh
xoshiro256** stream is seeded from ``cfg.seed``; the first draw decides the
prompt drop (``rand() < q``); each iteration then draws the dilate/erode
coin (``rand() < p``) followed by the kernel index (``floor(rand() * 9)``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .rng import Xoshiro256StarStar

CROSS_INDEX = 8  # the plus-shaped kernel is last, after the eight directionals


@dataclass(frozen=True)
class PromptConfig:
    """Knobs of the random scaling procedure.

    Training defaults: q=0.5, p=0.9, t=5.
    """

    p: float = 0.9
    q: float = 0.5
    t: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0 or not 0.0 <= self.q <= 1.0:
            raise ValueError(f"probabilities must be in [0,1]: p={self.p}, q={self.q}")
        if self.t < 0:
            raise ValueError(f"scaling count must be >= 0: t={self.t}")


def build_kernel_set() -> np.ndarray:
    """The nine 3x3 binary structuring kernels, shape (9, 3, 3).

    Kernels 0..7 are center-plus-neighbour, ordered by neighbour position in
    row-major order; kernel 8 is the plus/cross shape. Indexing is part of
    the reproducibility contract.
    """
    kernels = []
    for i in range(3):
        for j in range(3):
            if (i, j) == (1, 1):
                continue
            k = np.zeros((3, 3), dtype=np.float32)
            k[1, 1] = 1.0
            k[i, j] = 1.0
            kernels.append(k)
    cross = np.zeros((3, 3), dtype=np.float32)
    cross[1, 1] = cross[0, 1] = cross[1, 0] = cross[1, 2] = cross[2, 1] = 1.0
    kernels.append(cross)
    return np.stack(kernels)


_KERNELS = build_kernel_set()


def _correlate3(mask: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Zero-padded 3x3 cross-correlation of a binary mask."""
    padded = np.pad(mask, 1)
    win = sliding_window_view(padded, (3, 3))
    return np.tensordot(win, kernel, axes=([2, 3], [0, 1]))


def scale_step(mask: np.ndarray, kernel: np.ndarray, mode: str) -> np.ndarray:
    """One dilation or erosion step with a single structuring kernel.

    dilate: response > 0 (union of kernel-shifted copies).
    erode:  response >= popcount(kernel) (all kernel cells covered). For the
    two-cell directional kernels this is the same threshold as "> 1".
    """
    corr = _correlate3(mask, kernel)
    if mode == "dilate":
        return (corr > 0.5).astype(np.float32)
    if mode == "erode":
        need = float(kernel.sum())
        return (corr > need - 0.5).astype(np.float32)
    raise ValueError(f"mode must be 'dilate' or 'erode', got {mode!r}")


def generate_prompt(label: np.ndarray, cfg: PromptConfig) -> np.ndarray:
    """Produce one fuzzy ROI prompt from a binary label mask.

    Deterministic in (label, cfg); see the module docstring for the exact
    draw order.
    """
    label = np.asarray(label, dtype=np.float32)
    if label.ndim != 2:
        raise ValueError(f"label mask must be 2-D, got shape {label.shape}")
    rng = Xoshiro256StarStar(cfg.seed)
    if rng.random() < cfg.q:
        return np.zeros_like(label)
    mask = label.copy()
    for _ in range(cfg.t):
        coin = rng.random()
        kernel = _KERNELS[rng.randint_below(9)]
        mask = scale_step(mask, kernel, "dilate" if coin < cfg.p else "erode")
    return mask
