"""Momentum-SGD training of the encoder, decoder heads and prior."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..prior import FactorizedPrior
from ..volume import TsdfVolume, extract_occupied_blocks
from .network import Architecture, Model, encode, quantize
from .objective import loss_and_grads

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    lam: float = 1e-2
    steps: int = 2000
    seed: int = 0
    batch_size: int = 16
    lr: float = 1e-2
    sign_lr: float = 1e-2
    prior_lr: float = 1e-2
    momentum: float = 0.9
    # per-tensor gradient-norm clip; guards the first steps when rates are huge
    clip: float = 1.0


# The sign head and the prior appear only inside the lambda-weighted rate
# terms, so their minimisers do not depend on lambda. Their gradients are
# divided by lambda before the update; this keeps their step sizes usable
# across the whole sweep without changing what they converge to.
def _is_rate_only(name: str) -> bool:
    return name.startswith("sign.")


@dataclass
class TrainResult:
    model: Model
    history: list = field(default_factory=list)


def blocks_from_volumes(volumes, k: int) -> np.ndarray:
    """Occupied blocks of every volume, normalised by tau to [-1, 1]."""
    out = []
    for v in volumes:
        blocks, _ = extract_occupied_blocks(v, k)
        out.extend(b.values.astype(np.float64) / v.tau for b in blocks)
    if not out:
        return np.zeros((0, k, k, k))
    return np.stack(out)


def _clip(grads: dict, limit: float):
    """Clip each tensor's gradient norm separately (biases would otherwise dominate)."""
    if not limit:
        return
    for key, g in grads.items():
        norm = float(np.sqrt((g * g).sum()))
        if norm > limit:
            grads[key] = g * (limit / norm)


def _momentum_step(params: dict, vel: dict, grads: dict, lr: float, momentum: float):
    for key, g in grads.items():
        vel[key] = momentum * vel[key] - lr * g
        params[key] += vel[key]


def train(blocks, config: TrainConfig, arch: Architecture | None = None, model: Model | None = None) -> TrainResult:
    """Fit a model on normalised blocks ``(N, k, k, k)``."""
    blocks = np.asarray(blocks, dtype=np.float64)
    if blocks.ndim != 4 or blocks.shape[0] == 0:
        raise ValueError("training needs a non-empty array of blocks (N, k, k, k)")
    arch = arch or (model.arch if model else Architecture(block_size=blocks.shape[1]))
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = Model.init(arch, seed=config.seed)
    vel = {k: np.zeros_like(v) for k, v in model.params.items()}
    pvel = {k: np.zeros_like(v) for k, v in model.prior.params.items()}
    history = []
    n = blocks.shape[0]
    lat_shape = arch.latent_shape()
    for step in range(config.steps):
        idx = rng.integers(0, n, size=min(config.batch_size, n))
        noise = rng.uniform(-0.5, 0.5, (len(idx),) + lat_shape)
        terms, grads, pgrads = loss_and_grads(model, blocks[idx], config.lam, noise)
        if not np.isfinite(terms.total):
            raise TrainingDiverged(step)
        sign_grads = {k: grads.pop(k) / config.lam for k in list(grads) if _is_rate_only(k)}
        pgrads = {k: g / config.lam for k, g in pgrads.items()}
        for group in (grads, sign_grads, pgrads):
            _clip(group, config.clip)
        _momentum_step(model.params, vel, grads, config.lr, config.momentum)
        _momentum_step(model.params, vel, sign_grads, config.sign_lr, config.momentum)
        _momentum_step(model.prior.params, pvel, pgrads, config.prior_lr, config.momentum)
        history.append((terms.total, terms.distortion, terms.latent_bits, terms.sign_bits))
        if step % 500 == 0:
            log.info("step %d loss %.4f D %.4f Rz %.1f Rs %.1f", step, *history[-1])
    final = finalize(model, blocks, config)
    return TrainResult(final, history)


def finalize(model: Model, blocks, config: TrainConfig | None = None) -> Model:
    """Round parameters to float32 (the stored precision) and record latent ranges."""
    params = {k: v.astype(np.float32).astype(np.float64) for k, v in model.params.items()}
    prior = FactorizedPrior({k: v.astype(np.float32).astype(np.float64) for k, v in model.prior.params.items()})
    out = Model(model.arch, params, prior, meta=dict(model.meta))
    C = model.arch.latent_channels
    lo = np.full(C, 0, dtype=np.int64)
    hi = np.full(C, 0, dtype=np.int64)
    for start in range(0, len(blocks), 256):
        zhat = quantize(encode(out, blocks[start:start + 256])).reshape(-1, C)
        if start == 0:
            lo, hi = zhat.min(axis=0), zhat.max(axis=0)
        else:
            lo, hi = np.minimum(lo, zhat.min(axis=0)), np.maximum(hi, zhat.max(axis=0))
    out.latent_range = np.stack([lo, hi], axis=1).astype(np.int64)
    if config is not None:
        out.meta.update(lam=float(config.lam), steps=int(config.steps), seed=int(config.seed))
    return out


def train_on_volumes(volumes: list[TsdfVolume], config: TrainConfig, arch: Architecture | None = None) -> TrainResult:
    arch = arch or Architecture()
    return train(blocks_from_volumes(volumes, arch.block_size), config, arch)
