"""Rate-distortion objective: masked distortion + lambda * (latent bits + sign bits)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import prior as prior_mod
from . import layers as L
from .network import Model, decode, decode_backward, encode, encode_backward

SIGN_EPS = 2.0 ** -20
LN2 = np.log(2.0)


def block_signs(x) -> np.ndarray:
    """{-1, +1} signs with zero counted as positive."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def topology_masks(signs) -> np.ndarray:
    """Per-axis masks ``(3, B, k, k, k)``: voxels with an opposite-sign neighbour along that axis.

    Computed per block; neighbours outside the block are ignored.
    """
    s = np.asarray(signs)
    masks = np.zeros((3,) + s.shape, dtype=bool)
    for d in range(3):
        ax = d + 1
        n = s.shape[ax]
        lo = np.take(s, np.arange(n - 1), axis=ax)
        hi = np.take(s, np.arange(1, n), axis=ax)
        flip = lo != hi
        a = [slice(None)] * s.ndim
        b = [slice(None)] * s.ndim
        a[ax] = slice(0, n - 1)
        b[ax] = slice(1, n)
        masks[d][tuple(a)] |= flip
        masks[d][tuple(b)] |= flip
    return masks


def masked_distortion(x, x_hat, masks) -> float:
    """``(1/B) sum_n sum_d ||m_d * (x_hat - x)||^2``."""
    err2 = (np.asarray(x_hat, float) - np.asarray(x, float)) ** 2
    return float((masks * err2[None]).sum() / err2.shape[0])


def masked_distortion_grad(x, x_hat, masks) -> np.ndarray:
    weight = masks.sum(axis=0)
    return 2.0 * weight * (np.asarray(x_hat, float) - np.asarray(x, float)) / x_hat.shape[0]


def sign_rate_loss(signs, probs) -> float:
    """Cross-entropy in bits of {-1,+1} signs under probabilities of a positive sign."""
    t = (np.asarray(signs) + 1) / 2
    p = np.clip(np.asarray(probs, float), SIGN_EPS, 1.0 - SIGN_EPS)
    return float(-(t * np.log2(p) + (1 - t) * np.log2(1 - p)).sum())


def sign_rate_from_logits(signs, logits):
    """Bits and ``d bits / d logits`` (probabilities clamped as in :func:`sign_rate_loss`)."""
    t = (np.asarray(signs) + 1) / 2
    p_raw = L.sigmoid(logits)
    p = np.clip(p_raw, SIGN_EPS, 1.0 - SIGN_EPS)
    bits = float(-(t * np.log2(p) + (1 - t) * np.log2(1 - p)).sum())
    inside = (p_raw > SIGN_EPS) & (p_raw < 1.0 - SIGN_EPS)
    grad = np.where(inside, (p_raw - t) / LN2, 0.0)
    return bits, grad


@dataclass
class LossTerms:
    total: float
    distortion: float
    latent_bits: float
    sign_bits: float


def total_loss(distortion: float, latent_bits: float, sign_bits: float, lam: float) -> float:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return distortion + lam * (latent_bits + sign_bits)


def loss_and_grads(model: Model, x, lam: float, noise):
    """One forward/backward pass on normalised blocks ``x`` ``(B, k, k, k)``.

    ``noise`` is added to the latents (uniform in [-1/2, 1/2] during training).
    Rates are averaged over the batch, matching the ``1/B`` of the distortion.
    Returns ``(LossTerms, network grads, prior grads)``.
    """
    x = np.asarray(x, dtype=np.float64)
    B = x.shape[0]
    s = block_signs(x)
    masks = topology_masks(s)

    cache = {}
    z = encode(model, x, cache=cache)
    z_noisy = z + noise
    C = z.shape[-1]
    r_bits, g_zn, g_prior = prior_mod.latent_rate_and_grad(z_noisy.reshape(-1, C), model.prior)
    mag, logits = decode(model, z_noisy, cache=cache)
    s_bits, g_logits = sign_rate_from_logits(s, logits)
    x_hat = s * np.abs(mag)
    dist = masked_distortion(x, x_hat, masks)

    terms = LossTerms(total_loss(dist, r_bits / B, s_bits / B, lam), dist, r_bits / B, s_bits / B)

    g_xhat = masked_distortion_grad(x, x_hat, masks)
    g_mag = L.abs_backward(g_xhat * s, mag)
    g_z, grads = decode_backward(model, g_mag, g_logits * (lam / B), cache)
    g_z = g_z + g_zn.reshape(z.shape) * (lam / B)
    grads.update(encode_backward(model, g_z, cache))
    g_prior = {k: v * (lam / B) for k, v in g_prior.items()}
    return terms, grads, g_prior
