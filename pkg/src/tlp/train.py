"""Adversarial training loop.

Per batch: fresh fuzzy prompts are generated from the lesion masks, the
generator synthesizes the target contrast, the discriminator takes one
least-squares step on (real, detached fake), then the generator takes one
step on the adversarial + L1 objective. Optimizer is Adam with
betas (0.5, 0.999); the learning rate is held at lr0 for ``epochs_fixed``
epochs and then decays linearly to zero over ``epochs_decay`` epochs.

Everything is derived from one seed: parameter init, batch order, and the
per-(epoch, case) prompt streams, so a rerun with the same config produces
bit-identical checkpoints.

A run directory contains ``config.json`` (resolved config), ``log.jsonl``
(one JSON object per epoch) and ``ckpt_*.tlpckpt`` checkpoints.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from .blocks import ParamStore
from .errors import NanDetected, OutOfRange, ShapeMismatch
from .fpg import PromptConfig, generate_prompt
from .io import atomic_write
from .model import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    LossConfig,
    discriminator_loss,
    generator_loss,
    save_checkpoint,
)
from .phantom import PhantomCase
from .rng import Xoshiro256StarStar, mix_seed
from .tensor import Tensor, no_grad, zero_grads


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_pix: float = 100.0
    epochs_fixed: int = 8
    epochs_decay: int = 8
    batch_size: int = 4
    fpg_q: float = 0.5
    fpg_p: float = 0.9
    fpg_t: int = 5
    shared_prompt: bool = True  # one prompt per case, reused on both branches
    seed: int = 0
    checkpoint_every: int = 0  # 0 = final checkpoint only

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be > 0, got {self.lr0}")
        if self.epochs_fixed < 0 or self.epochs_decay < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def epochs_total(self) -> int:
        return self.epochs_fixed + self.epochs_decay


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Fixed for epochs_fixed epochs, then linear decay to zero."""
    if not 0 <= epoch < cfg.epochs_total:
        raise OutOfRange(f"epoch {epoch} outside schedule of {cfg.epochs_total}")
    if epoch < cfg.epochs_fixed:
        return cfg.lr0
    return cfg.lr0 * (1.0 - (epoch - cfg.epochs_fixed + 1) / cfg.epochs_decay)


# -- Adam -------------------------------------------------------------------------


@dataclass
class AdamSlot:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def adam_step(param: Tensor, grad: np.ndarray, slot: AdamSlot, lr: float,
              betas: tuple[float, float] = (0.5, 0.999), eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place."""
    if grad.shape != param.data.shape or slot.m.shape != param.data.shape:
        raise ShapeMismatch(f"adam_step: param {param.data.shape}, grad {grad.shape}")
    b1, b2 = betas
    slot.step += 1
    slot.m = b1 * slot.m + (1.0 - b1) * grad
    slot.v = b2 * slot.v + (1.0 - b2) * (grad * grad)
    mhat = slot.m / (1.0 - b1 ** slot.step)
    vhat = slot.v / (1.0 - b2 ** slot.step)
    param.data = (param.data - lr * mhat / (np.sqrt(vhat) + eps)).astype(np.float32)


class Adam:
    """Adam over a ParamStore; a missing grad counts as zero."""

    def __init__(self, store: ParamStore, beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.betas = (beta1, beta2)
        self.eps = eps
        self.slots = {
            path: AdamSlot(np.zeros_like(t.data), np.zeros_like(t.data))
            for path, t in store.items()
        }

    @property
    def step_count(self) -> int:
        return next(iter(self.slots.values())).step if self.slots else 0

    def step(self, lr: float) -> None:
        for path, t in self.store.items():
            grad = t.grad if t.grad is not None else np.zeros_like(t.data)
            adam_step(t, grad, self.slots[path], lr, self.betas, self.eps)


# -- batches and epochs --------------------------------------------------------------


def _stack(arrays: list[np.ndarray]) -> Tensor:
    return Tensor(np.stack(arrays)[:, None, :, :])


def make_prompts(cases: list[PhantomCase], cfg: TrainConfig, epoch: int,
                 indices: list[int]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Fresh fuzzy prompts per case; streams keyed by (seed, epoch, case index)."""
    p1, p2 = [], []
    for idx in indices:
        base = PromptConfig(p=cfg.fpg_p, q=cfg.fpg_q, t=cfg.fpg_t,
                            seed=mix_seed(cfg.seed, "fpg", epoch, idx, 0))
        prompt = generate_prompt(cases[idx].lesion, base)
        p1.append(prompt)
        if cfg.shared_prompt:
            p2.append(prompt)
        else:
            alt = PromptConfig(p=cfg.fpg_p, q=cfg.fpg_q, t=cfg.fpg_t,
                               seed=mix_seed(cfg.seed, "fpg", epoch, idx, 1))
            p2.append(generate_prompt(cases[idx].lesion, alt))
    return p1, p2


def train_epoch(gen: Generator, disc: Discriminator, cases: list[PhantomCase],
                cfg: TrainConfig, epoch: int, opt_g: Adam, opt_d: Adam) -> dict:
    """One pass over the training cases; returns the epoch report."""
    if not cases:
        raise ValueError("empty training set")
    loss_cfg = LossConfig(lambda_pix=cfg.lambda_pix)
    lr = lr_at(epoch, cfg)
    order = list(range(len(cases)))
    Xoshiro256StarStar(mix_seed(cfg.seed, "shuffle", epoch)).shuffle(order)

    single = gen.config.single_input
    tot_g = tot_d = tot_l1 = 0.0
    seen = 0
    for start in range(0, len(order), cfg.batch_size):
        idx = order[start : start + cfg.batch_size]
        x1 = _stack([cases[i].x1 for i in idx])
        x2 = None if single else _stack([cases[i].x2 for i in idx])
        y = _stack([cases[i].y for i in idx])
        p1, p2 = make_prompts(cases, cfg, epoch, idx)
        prompt1 = _stack(p1)
        prompt2 = None if single else _stack(p2)

        y_hat = gen.forward(x1, x2, prompt1, prompt2)

        # discriminator step on (real, detached fake)
        zero_grads(disc.parameters())
        d_loss = discriminator_loss(disc(y_hat.detach()), disc(y))
        d_loss.backward()
        opt_d.step(lr)

        # generator step through the (frozen) discriminator
        zero_grads(gen.parameters())
        g_loss = generator_loss(disc(y_hat), y_hat, y, loss_cfg)
        g_loss.backward()
        opt_g.step(lr)

        l1 = float(np.abs(y_hat.data - y.data).mean())
        gv, dv = g_loss.item(), d_loss.item()
        if not (np.isfinite(gv) and np.isfinite(dv) and np.isfinite(l1)):
            raise NanDetected(
                f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}: "
                f"g={gv}, d={dv}, l1={l1}"
            )
        n = len(idx)
        tot_g += gv * n
        tot_d += dv * n
        tot_l1 += l1 * n
        seen += n

    return {
        "epoch": epoch,
        "lr": lr,
        "g_loss": tot_g / seen,
        "d_loss": tot_d / seen,
        "l1": tot_l1 / seen,
        "batches": (len(order) + cfg.batch_size - 1) // cfg.batch_size,
    }


def _quick_val_psnr(gen: Generator, cases: list[PhantomCase]) -> float | None:
    """Mean no-prompt PSNR over a (small) validation list."""
    from .metrics import psnr  # local import to avoid a cycle

    if not cases:
        return None
    vals = []
    with no_grad():
        for case in cases:
            zeros = np.zeros_like(case.lesion)
            x2 = None if gen.config.single_input else Tensor(case.x2[None, None])
            y_hat = gen.forward(Tensor(case.x1[None, None]), x2, Tensor(zeros[None, None]))
            vals.append(psnr(y_hat.data[0, 0], case.y))
    return float(np.mean(vals))


def train(train_cases: list[PhantomCase], val_cases: list[PhantomCase],
          run_dir: str, cfg: TrainConfig, gen_cfg: GeneratorConfig,
          disc_cfg: DiscriminatorConfig | None = None,
          progress=None) -> tuple[Generator, Discriminator, list[dict]]:
    """Full training run; writes config, per-epoch log and checkpoints."""
    gen = Generator(gen_cfg, seed=mix_seed(cfg.seed, "gen-init"))
    disc = Discriminator(disc_cfg, seed=mix_seed(cfg.seed, "disc-init"))
    opt_g = Adam(gen.store, cfg.beta1, cfg.beta2, cfg.eps)
    opt_d = Adam(disc.store, cfg.beta1, cfg.beta2, cfg.eps)

    os.makedirs(run_dir, exist_ok=True)
    resolved = {"train": asdict(cfg), "generator": asdict(gen_cfg),
                "discriminator": asdict(disc.config) | {"strides": list(disc.config.strides)}}
    atomic_write(os.path.join(run_dir, "config.json"),
                 lambda fh: fh.write(json.dumps(resolved, indent=2, sort_keys=True).encode("utf-8")))

    history = []
    log_path = os.path.join(run_dir, "log.jsonl")
    with open(log_path, "w", encoding="utf-8") as log:
        for epoch in range(cfg.epochs_total):
            t0 = time.perf_counter()
            report = train_epoch(gen, disc, train_cases, cfg, epoch, opt_g, opt_d)
            report["val_psnr"] = _quick_val_psnr(gen, val_cases)
            report["seconds"] = round(time.perf_counter() - t0, 3)
            history.append(report)
            log.write(json.dumps(report, sort_keys=True) + "\n")
            log.flush()
            if progress is not None:
                progress(report)
            if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(gen, os.path.join(run_dir, f"ckpt_{epoch:03d}.tlpckpt"))
    save_checkpoint(gen, os.path.join(run_dir, "ckpt_final.tlpckpt"))
    save_checkpoint(disc, os.path.join(run_dir, "disc_final.tlpckpt"))
    return gen, disc, history
