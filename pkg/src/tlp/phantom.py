"""Procedural multi-contrast phantom cases.

Each case is a small "head": an outer shell ellipse, a few nested tissue
ellipses, and 1-3 lesion blobs, rendered under three per-modality intensity
tables (two input contrasts plus one target contrast). The target contrast
applies a brighten-only remap of the tissue values (the global "uptake"
every tissue shows) and additionally lifts the lesion interior plus a
2-pixel rim by a fixed enhancement gain, so lesion location genuinely
matters for predicting the target. Independent Gaussian noise is added to
every image before clamping to [-1, 1].

Generation is deterministic in (spec.seed, case index): geometry draws come
from a per-case xoshiro stream and noise fields from per-(case, modality)
Philox streams.

On disk, a case is a directory `<id>/` holding `x1.tlpt`, `x2.tlpt`,
`y.tlpt`, `lesion.pgm` and `meta.json`; a dataset adds a `manifest.json`
listing every id with its split.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import BadFractions, ConstantImage, CorruptHeader, IOFailure
from .io import atomic_write, read_pgm, read_tlpt, write_pgm, write_tlpt
from .rng import Xoshiro256StarStar, mix_seed, normal_array

# tissue labels: 0 air, 1 outer shell, 2..5 nested tissues, 6 lesion
AIR, SHELL, LESION = 0, 1, 6

# The lesion is only weakly visible in the input contrasts (close to the
# mid-tissue values, a few noise sigmas away) so that location prompts carry
# real information; the target contrast lights it up unambiguously.
DEFAULT_TABLE_X1 = (-1.0, 0.55, -0.55, 0.30, 0.05, 0.20, 0.12)
DEFAULT_TABLE_X2 = (-1.0, -0.35, 0.65, -0.20, 0.10, -0.05, 0.00)
# target table: brighten-only remap of the x1 values (uptake varies by tissue)
DEFAULT_TABLE_Y = (-1.0, 0.60, -0.45, 0.45, 0.10, 0.45, 0.20)


@dataclass
class PhantomSpec:
    resolution: int = 64
    tissue_count_range: tuple = (2, 4)
    lesion_count_range: tuple = (1, 3)
    lesion_radius_range: tuple = (2.0, 5.0)
    noise_std: float = 0.02
    enhancement_gain: float = 0.5
    rim_width: int = 2
    seed: int = 0
    table_x1: tuple = DEFAULT_TABLE_X1
    table_x2: tuple = DEFAULT_TABLE_X2
    table_y: tuple = DEFAULT_TABLE_Y

    def __post_init__(self):
        for table in (self.table_x1, self.table_x2, self.table_y):
            if any(not -1.0 <= v <= 1.0 for v in table):
                raise ValueError("intensity tables must map into [-1, 1]")


@dataclass
class PhantomCase:
    id: str
    x1: np.ndarray
    x2: np.ndarray
    y: np.ndarray
    lesion: np.ndarray


def _ellipse_mask(res, cx, cy, a, b, theta):
    yy, xx = np.mgrid[0:res, 0:res]
    dx, dy = xx - cx, yy - cy
    ct, st = math.cos(theta), math.sin(theta)
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0


def dilate_disk(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation with a Euclidean disk, zero-padded at the border."""
    h, w = mask.shape
    padded = np.pad(mask.astype(bool), radius)
    out = np.zeros_like(padded)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy * dy + dx * dx <= radius * radius:
                out[radius + dy : radius + dy + h, radius + dx : radius + dx + w] |= mask.astype(bool)
    return out[radius : radius + h, radius : radius + w]


def generate_case(spec: PhantomSpec, index: int) -> PhantomCase:
    """Deterministic in (spec.seed, index)."""
    res = spec.resolution
    rng = Xoshiro256StarStar(mix_seed(spec.seed, "case", index))

    cx = res * rng.uniform(0.47, 0.53)
    cy = res * rng.uniform(0.47, 0.53)
    a = res * rng.uniform(0.33, 0.42)
    b = res * rng.uniform(0.36, 0.46)
    theta = rng.uniform(0.0, math.pi)

    labels = np.zeros((res, res), dtype=np.int32)
    brain = _ellipse_mask(res, cx, cy, a, b, theta)
    labels[brain] = SHELL

    n_tissue = rng.randint_below(spec.tissue_count_range[1] - spec.tissue_count_range[0] + 1) + spec.tissue_count_range[0]
    scales = [0.88, 0.68, 0.50, 0.34]
    for i in range(n_tissue):
        s = scales[i] * rng.uniform(0.92, 1.08)
        ox = rng.uniform(-0.04, 0.04) * res
        oy = rng.uniform(-0.04, 0.04) * res
        region = _ellipse_mask(res, cx + ox, cy + oy, a * s, b * s, theta + rng.uniform(-0.2, 0.2))
        labels[region & brain] = 2 + i

    inner = _ellipse_mask(res, cx, cy, a * 0.9, b * 0.9, theta)
    n_lesion = rng.randint_below(spec.lesion_count_range[1] - spec.lesion_count_range[0] + 1) + spec.lesion_count_range[0]
    lesion = np.zeros((res, res), dtype=bool)
    for _ in range(n_lesion):
        # centre inside the inner 65% of the brain ellipse
        while True:
            u, v = rng.uniform(-0.65, 0.65), rng.uniform(-0.65, 0.65)
            if u * u + v * v <= 0.65 * 0.65:
                break
        ct, st = math.cos(theta), math.sin(theta)
        lx = cx + a * u * ct - b * v * st
        ly = cy + a * u * st + b * v * ct
        r = rng.uniform(*spec.lesion_radius_range)
        blob = _ellipse_mask(res, lx, ly, r * rng.uniform(0.75, 1.3), r * rng.uniform(0.75, 1.3), rng.uniform(0.0, math.pi))
        lesion |= blob
    lesion &= inner  # keep lesions strictly inside the brain
    labels[lesion] = LESION

    def render(table, channel):
        img = np.asarray(table, dtype=np.float32)[labels]
        if channel == 2:  # target contrast: lesion plus rim take up the gain
            region = dilate_disk(lesion, spec.rim_width)
            img = img + spec.enhancement_gain * region.astype(np.float32)
        noise = normal_array((res, res), seed=mix_seed(spec.seed, "noise", index, channel), std=spec.noise_std)
        return np.clip(img + noise, -1.0, 1.0).astype(np.float32)

    return PhantomCase(
        id=f"case{index:04d}",
        x1=render(spec.table_x1, 0),
        x2=render(spec.table_x2, 1),
        y=render(spec.table_y, 2),
        lesion=lesion.astype(np.float32),
    )


# -- normalization -------------------------------------------------------------------


def normalize(img: np.ndarray) -> tuple[np.ndarray, tuple[float, float]]:
    """Affine map of [min, max] onto [-1, 1]; returns (scaled, (lo, hi))."""
    arr = np.asarray(img, dtype=np.float32)
    lo, hi = float(arr.min()), float(arr.max())
    if not np.isfinite(lo) or not np.isfinite(hi):
        raise ConstantImage("input contains non-finite values")
    if hi <= lo:
        raise ConstantImage(f"constant image (value {lo}) cannot be normalized")
    return ((arr - lo) / (hi - lo) * 2.0 - 1.0).astype(np.float32), (lo, hi)


def denormalize(img: np.ndarray, bounds: tuple[float, float]) -> np.ndarray:
    lo, hi = bounds
    return ((np.asarray(img, dtype=np.float32) + 1.0) / 2.0 * (hi - lo) + lo).astype(np.float32)


# -- splits ---------------------------------------------------------------------------


def make_splits(n_cases: int, fractions: tuple[float, float, float], seed: int):
    """Disjoint, exhaustive, deterministic (train, val, test) id lists."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise BadFractions(f"fractions must be >= 0 and sum to 1, got {fractions}")
    ids = [f"case{i:04d}" for i in range(n_cases)]
    rng = Xoshiro256StarStar(mix_seed(seed, "splits"))
    rng.shuffle(ids)
    n_train = int(round(fractions[0] * n_cases))
    n_val = int(round(fractions[1] * n_cases))
    n_train = min(n_train, n_cases)
    n_val = min(n_val, n_cases - n_train)
    return ids[:n_train], ids[n_train : n_train + n_val], ids[n_train + n_val :]


# -- case and dataset I/O ---------------------------------------------------------------


def write_case(case: PhantomCase, root: str, meta: dict | None = None) -> str:
    case_dir = os.path.join(root, case.id)
    write_tlpt(os.path.join(case_dir, "x1.tlpt"), case.x1)
    write_tlpt(os.path.join(case_dir, "x2.tlpt"), case.x2)
    write_tlpt(os.path.join(case_dir, "y.tlpt"), case.y)
    write_pgm(os.path.join(case_dir, "lesion.pgm"), case.lesion)
    sidecar = {"id": case.id, "resolution": list(case.x1.shape)}
    if meta:
        sidecar.update(meta)
    atomic_write(
        os.path.join(case_dir, "meta.json"),
        lambda fh: fh.write(json.dumps(sidecar, indent=2, sort_keys=True).encode("utf-8")),
    )
    return case_dir


def read_case(case_dir: str) -> PhantomCase:
    try:
        with open(os.path.join(case_dir, "meta.json"), "rb") as fh:
            meta = json.loads(fh.read().decode("utf-8"))
    except OSError as exc:
        raise IOFailure(f"cannot read case {case_dir}: {exc}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptHeader(f"bad sidecar in {case_dir}: {exc}") from exc
    return PhantomCase(
        id=meta["id"],
        x1=read_tlpt(os.path.join(case_dir, "x1.tlpt")),
        x2=read_tlpt(os.path.join(case_dir, "x2.tlpt")),
        y=read_tlpt(os.path.join(case_dir, "y.tlpt")),
        lesion=read_pgm(os.path.join(case_dir, "lesion.pgm")),
    )


def generate_dataset(
    spec: PhantomSpec,
    n_cases: int,
    out_dir: str,
    fractions: tuple[float, float, float] = (0.85, 0.02, 0.13),
) -> dict:
    """Write n_cases phantom cases plus a manifest; returns the manifest."""
    train, val, test = make_splits(n_cases, fractions, spec.seed)
    split_of = {cid: "train" for cid in train}
    split_of.update({cid: "val" for cid in val})
    split_of.update({cid: "test" for cid in test})
    cases = []
    for index in range(n_cases):
        case = generate_case(spec, index)
        write_case(case, out_dir, meta={"spec_seed": spec.seed, "index": index, "split": split_of[case.id]})
        cases.append({"id": case.id, "split": split_of[case.id]})
    manifest = {
        "resolution": spec.resolution,
        "seed": spec.seed,
        "spec": asdict(spec),
        "cases": cases,
    }
    atomic_write(
        os.path.join(out_dir, "manifest.json"),
        lambda fh: fh.write(json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8")),
    )
    return manifest


def read_manifest(data_dir: str) -> dict:
    path = os.path.join(data_dir, "manifest.json")
    try:
        with open(path, "rb") as fh:
            manifest = json.loads(fh.read().decode("utf-8"))
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptHeader(f"corrupt manifest {path}: {exc}") from exc
    if "cases" not in manifest:
        raise CorruptHeader(f"manifest {path} lacks a case list")
    return manifest


def split_ids(manifest: dict, split: str) -> list[str]:
    return [c["id"] for c in manifest["cases"] if c["split"] == split]


def load_split(data_dir: str, split: str) -> list[PhantomCase]:
    manifest = read_manifest(data_dir)
    return [read_case(os.path.join(data_dir, cid)) for cid in split_ids(manifest, split)]
