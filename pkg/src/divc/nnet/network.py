"""Block encoder and dual-head decoder.

Encoder: ``n_layers`` stride-2 convolutions (kernel 3, pad 1), leaky-ReLU
between them and none on the latent. Decoder: ``n_layers`` stride-2
transposed convolutions (kernel 4, pad 1) with leaky-ReLU, then two stride-1
heads (kernel 3, pad 1): magnitudes and sign logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..prior import FactorizedPrior
from . import layers as L

ENC_K, DEC_K, HEAD_K = 3, 4, 3


@dataclass(frozen=True)
class Architecture:
    block_size: int = 8
    n_layers: int = 3
    latent_channels: int = 32
    widths: tuple = (16, 32)
    head_width: int = 16

    def __post_init__(self):
        k = self.block_size
        if k < 2 or k & (k - 1):
            raise ValueError(f"block size must be a power of two, got {k}")
        if not 1 <= self.n_layers or k >> self.n_layers < 1:
            raise ValueError(f"{self.n_layers} stride-2 layers do not fit a block of {k}")

    @property
    def latent_size(self) -> int:
        return self.block_size >> self.n_layers

    @property
    def encoder_channels(self) -> list[int]:
        hidden = [self.widths[min(i, len(self.widths) - 1)] for i in range(self.n_layers - 1)]
        return [1] + hidden + [self.latent_channels]

    @property
    def decoder_channels(self) -> list[int]:
        hidden = list(reversed(self.encoder_channels[1:-1]))
        return [self.latent_channels] + hidden + [self.head_width]

    def param_shapes(self) -> dict:
        shapes = {}
        enc = self.encoder_channels
        for i in range(self.n_layers):
            shapes[f"enc{i}.w"] = (ENC_K,) * 3 + (enc[i], enc[i + 1])
            shapes[f"enc{i}.b"] = (enc[i + 1],)
        dec = self.decoder_channels
        for i in range(self.n_layers):
            shapes[f"dec{i}.w"] = (DEC_K,) * 3 + (dec[i], dec[i + 1])
            shapes[f"dec{i}.b"] = (dec[i + 1],)
        for head in ("mag", "sign"):
            shapes[f"{head}.w"] = (HEAD_K,) * 3 + (self.head_width, 1)
            shapes[f"{head}.b"] = (1,)
        return shapes

    def latent_shape(self) -> tuple:
        s = self.latent_size
        return (s, s, s, self.latent_channels)


def init_params(arch: Architecture, rng: np.random.Generator) -> dict:
    params = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
    return params


@dataclass
class Model:
    arch: Architecture
    params: dict
    prior: FactorizedPrior
    latent_range: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def init(cls, arch: Architecture, seed: int = 0) -> "Model":
        rng = np.random.default_rng(seed)
        params = init_params(arch, rng)
        prior = FactorizedPrior.init(arch.latent_channels, rng)
        return cls(arch, params, prior)


# ---------------------------------------------------------------------------
# forward / backward


def encode(model: Model, x, strict=False, cache=None):
    """``x``: normalised blocks ``(B, k, k, k)`` -> latents ``(B, s, s, s, C)``."""
    arch, p = model.arch, model.params
    k = arch.block_size
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[1:] != (k, k, k):
        raise ValueError(f"expected blocks of shape (B, {k}, {k}, {k}), got {x.shape}")
    h = x[..., None]
    for i in range(arch.n_layers):
        if cache is not None:
            cache[f"enc{i}.in"] = h
        pre = L.conv3d(h, p[f"enc{i}.w"], p[f"enc{i}.b"], stride=2, pad=1, strict=strict)
        if i < arch.n_layers - 1:
            if cache is not None:
                cache[f"enc{i}.pre"] = pre
            h = L.leaky_relu(pre)
        else:
            h = pre
    return h


def decode(model: Model, z, strict=False, cache=None):
    """Latents -> ``(magnitudes, sign_logits)``, each ``(B, k, k, k)``."""
    arch, p = model.arch, model.params
    z = np.asarray(z, dtype=np.float64)
    if z.shape[1:] != arch.latent_shape():
        raise ValueError(f"expected latents of shape (B, {arch.latent_shape()}), got {z.shape}")
    h = z
    for i in range(arch.n_layers):
        if cache is not None:
            cache[f"dec{i}.in"] = h
        pre = L.tconv3d(h, p[f"dec{i}.w"], p[f"dec{i}.b"], stride=2, pad=1, strict=strict)
        if cache is not None:
            cache[f"dec{i}.pre"] = pre
        h = L.leaky_relu(pre)
    if cache is not None:
        cache["head.in"] = h
    mag = L.conv3d(h, p["mag.w"], p["mag.b"], stride=1, pad=1, strict=strict)[..., 0]
    logits = L.conv3d(h, p["sign.w"], p["sign.b"], stride=1, pad=1, strict=strict)[..., 0]
    return mag, logits


def decode_backward(model: Model, g_mag, g_logits, cache) -> tuple[np.ndarray, dict]:
    arch, p = model.arch, model.params
    grads = {}
    h = cache["head.in"]
    gh = np.zeros_like(h)
    for head, g in (("mag", g_mag), ("sign", g_logits)):
        gx, gw, gb = L.conv3d_backward(g[..., None], h, p[f"{head}.w"], stride=1, pad=1)
        gh += gx
        grads[f"{head}.w"], grads[f"{head}.b"] = gw, gb
    for i in reversed(range(arch.n_layers)):
        g_pre = L.leaky_relu_backward(gh, cache[f"dec{i}.pre"])
        gh, gw, gb = L.tconv3d_backward(g_pre, cache[f"dec{i}.in"], p[f"dec{i}.w"], stride=2, pad=1)
        grads[f"dec{i}.w"], grads[f"dec{i}.b"] = gw, gb
    return gh, grads


def encode_backward(model: Model, g_z, cache) -> dict:
    arch, p = model.arch, model.params
    grads = {}
    g = g_z
    for i in reversed(range(arch.n_layers)):
        if i < arch.n_layers - 1:
            g = L.leaky_relu_backward(g, cache[f"enc{i}.pre"])
        g, gw, gb = L.conv3d_backward(g, cache[f"enc{i}.in"], p[f"enc{i}.w"], stride=2, pad=1)
        grads[f"enc{i}.w"], grads[f"enc{i}.b"] = gw, gb
    return grads


def quantize(z) -> np.ndarray:
    """Round to nearest integer, ties away from zero."""
    z = np.asarray(z, dtype=np.float64)
    return (np.sign(z) * np.floor(np.abs(z) + 0.5)).astype(np.int64)


def sign_probs(logits) -> np.ndarray:
    return L.sigmoid(logits)


def reconstruct(signs, magnitudes) -> np.ndarray:
    """``s * |m|`` with ``s`` in {-1, +1}."""
    return np.asarray(signs, dtype=np.float64) * np.abs(magnitudes)
