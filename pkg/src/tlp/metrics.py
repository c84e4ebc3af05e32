"""Image quality metrics and split-level evaluation reports.

Conventions, pinned once so numbers are comparable across runs:

* PSNR and SSIM are computed after remapping both images from [-1, 1] to
  [0, 1]; the dynamic range is therefore 1, and identical images report the
  cap value of 100 dB instead of infinity.
* SSIM uses the canonical 11x11 Gaussian window (sigma 1.5), K1=0.01,
  K2=0.03, and averages the local map over fully-valid window positions.
* NMSE is ||yhat - y||^2 / ||y||^2 on the native [-1, 1] scale.

All metric arithmetic runs in float64.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatch, TooSmall, ZeroReference
from .tensor import Tensor, no_grad

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _to_unit(img: np.ndarray) -> np.ndarray:
    return (np.asarray(img, dtype=np.float64) + 1.0) / 2.0


def _check_pair(a, b):
    if np.shape(a) != np.shape(b):
        raise ShapeMismatch(f"metric inputs differ: {np.shape(a)} vs {np.shape(b)}")


def psnr(y_hat: np.ndarray, y: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB on the [0, 1] remapped scale."""
    _check_pair(y_hat, y)
    diff = _to_unit(y_hat) - _to_unit(y)
    mse = float(np.mean(diff * diff))
    if mse <= 10.0 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return 10.0 * math.log10(1.0 / mse)


def masked_psnr(y_hat: np.ndarray, y: np.ndarray, mask: np.ndarray) -> float:
    """PSNR restricted to the pixels where mask is nonzero."""
    _check_pair(y_hat, y)
    _check_pair(y_hat, mask)
    sel = np.asarray(mask) > 0
    if not sel.any():
        raise ZeroReference("empty mask region")
    diff = (_to_unit(y_hat) - _to_unit(y))[sel]
    mse = float(np.mean(diff * diff))
    if mse <= 10.0 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    win = sliding_window_view(img, kernel.shape)
    return np.tensordot(win, kernel, axes=([2, 3], [0, 1]))


def ssim(y_hat: np.ndarray, y: np.ndarray) -> float:
    """Mean local structural similarity over valid 11x11 window positions."""
    _check_pair(y_hat, y)
    a = _to_unit(y_hat)
    b = _to_unit(y)
    if a.ndim != 2:
        raise ShapeMismatch(f"ssim expects 2-D images, got {a.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise TooSmall(f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    k = _gaussian_kernel()
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    mu1 = _filter_valid(a, k)
    mu2 = _filter_valid(b, k)
    var1 = _filter_valid(a * a, k) - mu1 * mu1
    var2 = _filter_valid(b * b, k) - mu2 * mu2
    cov = _filter_valid(a * b, k) - mu1 * mu2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * cov + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2)
    return float(np.mean(num / den))


def nmse(y_hat: np.ndarray, y: np.ndarray) -> float:
    """||yhat - y||^2 / ||y||^2 on the native scale."""
    _check_pair(y_hat, y)
    ref = np.asarray(y, dtype=np.float64)
    energy = float(np.sum(ref * ref))
    if energy == 0.0:
        raise ZeroReference("reference image has zero energy")
    diff = np.asarray(y_hat, dtype=np.float64) - ref
    return float(np.sum(diff * diff) / energy)


# -- reports ---------------------------------------------------------------------


@dataclass
class MetricReport:
    rows: list[dict] = field(default_factory=list)

    def add(self, case_id: str, psnr_db: float, ssim_val: float, nmse_val: float) -> None:
        self.rows.append({"id": case_id, "psnr_db": psnr_db, "ssim": ssim_val, "nmse": nmse_val})

    def _column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows], dtype=np.float64)

    def mean(self, key: str) -> float:
        return float(self._column(key).mean())

    def std(self, key: str) -> float:
        return float(self._column(key).std())

    def to_dict(self) -> dict:
        return {
            "cases": self.rows,
            "aggregates": {
                key: {"mean": self.mean(key), "std": self.std(key)}
                for key in ("psnr_db", "ssim", "nmse")
            },
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def to_table(self, label: str = "synthesis") -> str:
        """Aligned text table with mean+/-std cells."""
        header = f"{'method':<14}{'PSNR (dB)':>16}{'SSIM':>16}{'NMSE':>16}"
        cell = lambda key, digits: f"{self.mean(key):.{digits}f}±{self.std(key):.{digits}f}"
        row = f"{label:<14}{cell('psnr_db', 2):>16}{cell('ssim', 3):>16}{cell('nmse', 3):>16}"
        return header + "\n" + row


# -- split evaluation ---------------------------------------------------------------


def resolve_prompt(mode: str, case, resolution) -> np.ndarray:
    """Prompt modes: 'none' (all-zero), 'lesion' / 'oracle-lesion' (stored
    ground-truth mask), or 'file:<path>' (PGM mask applied to every case)."""
    from .io import read_pgm

    if mode in (None, "none"):
        return np.zeros(resolution, dtype=np.float32)
    if mode in ("lesion", "oracle-lesion"):
        return case.lesion
    if mode.startswith("file:"):
        mask = read_pgm(mode[5:])
        if mask.shape != tuple(resolution):
            raise ShapeMismatch(f"prompt mask {mask.shape} vs case resolution {resolution}")
        return mask
    raise ValueError(f"unknown prompt mode {mode!r}")


def synthesize_case(gen, case, prompt: np.ndarray) -> np.ndarray:
    """Run the generator on one case; returns the (H, W) output image."""
    x2 = None if gen.config.single_input else Tensor(case.x2[None, None])
    with no_grad():
        out = gen.forward(Tensor(case.x1[None, None]), x2, Tensor(prompt[None, None]))
    return out.data[0, 0]


def evaluate_split(gen_or_ckpt, data_dir: str, split: str = "test",
                   prompt_mode: str = "none") -> MetricReport:
    """Per-case PSNR/SSIM/NMSE for one dataset split, in id order."""
    from .model import Generator, load_checkpoint
    from .phantom import load_split

    gen = gen_or_ckpt
    if not isinstance(gen, Generator):
        gen = load_checkpoint(gen_or_ckpt)
        if gen.kind != "generator":
            raise ShapeMismatch(f"checkpoint holds a {gen.kind}, not a generator")
    cases = sorted(load_split(data_dir, split), key=lambda c: c.id)
    report = MetricReport()
    for case in cases:
        prompt = resolve_prompt(prompt_mode, case, case.x1.shape)
        y_hat = synthesize_case(gen, case, prompt)
        report.add(case.id, psnr(y_hat, case.y), ssim(y_hat, case.y), nmse(y_hat, case.y))
    return report
