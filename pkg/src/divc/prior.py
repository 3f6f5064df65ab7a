"""Learned factorized prior over quantized latents.

Each latent channel owns a monotone cumulative ``c(x) = logistic(f(x))`` where
``f`` chains three monotone layers::

    y1 = softplus(H1) x + b1 ;  g1 = y1 + tanh(a1) * tanh(y1)     (1 -> 3)
    y2 = softplus(H2) g1 + b2 ; g2 = y2 + tanh(a2) * tanh(y2)     (3 -> 3)
    f  = softplus(H3) g2 + b3                                    (3 -> 1)

Positive weights and gate factors ``tanh(a) > -1`` make every layer strictly
increasing, hence ``c`` too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _exact
from .coder import PROB_ONE, FrequencyTable
from .nnet.layers import sigmoid

WIDTH = 3
LIKELIHOOD_FLOOR = 2.0 ** -30
SUPPORT_HALF_WIDTH = 32
SUPPORT_MARGIN = 8
PARAM_NAMES = ("H1", "b1", "a1", "H2", "b2", "a2", "H3", "b3")


def _softplus(x):
    return np.logaddexp(0.0, x)


@dataclass
class FactorizedPrior:
    params: dict

    @property
    def channels(self) -> int:
        return self.params["b1"].shape[0]

    @classmethod
    def init(cls, channels: int, rng: np.random.Generator, init_scale: float = 10.0) -> "FactorizedPrior":
        dims = (1, WIDTH, WIDTH, 1)
        scale = init_scale ** (1.0 / (len(dims) - 1))
        p = {}
        for i in range(3):
            fan_in, fan_out = dims[i], dims[i + 1]
            h0 = np.log(np.expm1(1.0 / scale / fan_out))
            p[f"H{i + 1}"] = np.full((channels, fan_out, fan_in), h0)
            p[f"b{i + 1}"] = rng.uniform(-0.5, 0.5, (channels, fan_out))
            if i < 2:
                p[f"a{i + 1}"] = np.zeros((channels, fan_out))
        return cls(p)

    def copy(self) -> "FactorizedPrior":
        return FactorizedPrior({k: v.copy() for k, v in self.params.items()})

    # -- float path ---------------------------------------------------------

    def logits(self, x):
        """Logit of the cumulative; ``x`` has shape ``(N, C)``. Returns ``(f, cache)``."""
        p = self.params
        h = [_softplus(p[f"H{i}"]) for i in (1, 2, 3)]
        t = [np.tanh(p[f"a{i}"]) for i in (1, 2)]
        y1 = h[0][None, :, :, 0] * x[:, :, None] + p["b1"]
        g1 = y1 + t[0] * np.tanh(y1)
        y2 = np.einsum("cij,ncj->nci", h[1], g1) + p["b2"]
        g2 = y2 + t[1] * np.tanh(y2)
        f = np.einsum("cj,ncj->nc", h[2][:, 0, :], g2) + p["b3"][:, 0]
        return f, (x, h, t, y1, g1, y2, g2)

    def logits_backward(self, gf, cache):
        """Backprop ``d/df`` to ``(d/dx, d/dparams)``."""
        p = self.params
        x, h, t, y1, g1, y2, g2 = cache
        grads = {}
        grads["b3"] = gf.sum(axis=0)[:, None]
        grads["H3"] = (np.einsum("nc,ncj->cj", gf, g2) * _dsoftplus(p["H3"][:, 0, :]))[:, None, :]
        gg2 = gf[:, :, None] * h[2][None, :, 0, :]
        th2 = np.tanh(y2)
        gy2 = gg2 * (1.0 + t[1] * (1.0 - th2 ** 2))
        grads["a2"] = np.einsum("nci,nci->ci", gg2, th2) * (1.0 - t[1] ** 2)
        grads["b2"] = gy2.sum(axis=0)
        grads["H2"] = np.einsum("nci,ncj->cij", gy2, g1) * _dsoftplus(p["H2"])
        gg1 = np.einsum("nci,cij->ncj", gy2, h[1])
        th1 = np.tanh(y1)
        gy1 = gg1 * (1.0 + t[0] * (1.0 - th1 ** 2))
        grads["a1"] = np.einsum("nci,nci->ci", gg1, th1) * (1.0 - t[0] ** 2)
        grads["b1"] = gy1.sum(axis=0)
        grads["H1"] = (np.einsum("nci,nc->ci", gy1, x) * _dsoftplus(p["H1"][:, :, 0]))[:, :, None]
        gx = np.einsum("nci,ci->nc", gy1, h[0][:, :, 0])
        return gx, grads

    def cdf(self, x):
        return sigmoid(self.logits(np.asarray(x, float))[0])

    def likelihood(self, z):
        """``c(z + 1/2) - c(z - 1/2)`` per element, shape ``(N, C)``."""
        return _interval(self, z)[0]

    # -- exact path ---------------------------------------------------------

    def exact_cdf(self, channel: int, x):
        """Cumulative at ``x`` in exact decimal arithmetic (for coding tables)."""
        layers = self._exact_params(channel)
        with _exact.context():
            return self._exact_forward(layers, _exact.dec(x))

    @staticmethod
    def _exact_forward(layers, x):
        g = [x]
        for H, b, a in layers:
            out = []
            for i in range(len(b)):
                acc = b[i]
                for j in range(len(g)):
                    acc = acc + H[i][j] * g[j]
                if a is not None:
                    acc = acc + a[i] * _exact.tanh(acc)
                out.append(acc)
            g = out
        return _exact.logistic(g[0])

    def _exact_params(self, channel: int):
        cache = self.__dict__.setdefault("_exact_cache", {})
        if channel not in cache:
            layers = []
            for i in (1, 2, 3):
                H = self.params[f"H{i}"][channel]
                b = self.params[f"b{i}"][channel]
                H_d = [[_exact.softplus(_exact.dec(float(v))) for v in row] for row in H]
                b_d = [_exact.dec(float(v)) for v in b]
                a_d = None
                if i < 3:
                    a_d = [_exact.tanh(_exact.dec(float(v))) for v in self.params[f"a{i}"][channel]]
                layers.append((H_d, b_d, a_d))
            cache[channel] = layers
        return cache[channel]


def _dsoftplus(x):
    return sigmoid(x)


def _interval(prior: FactorizedPrior, z):
    z = np.asarray(z, float)
    n = z.shape[0]
    both = np.concatenate([z + 0.5, z - 0.5], axis=0)
    f, cache = prior.logits(both)
    upper, lower = f[:n], f[n:]
    # evaluate in the tail where the logistic has full relative precision
    s = np.where(upper + lower > 0, -1.0, 1.0)
    lik = np.abs(sigmoid(s * upper) - sigmoid(s * lower))
    return lik, upper, lower, cache


def latent_rate(z_noisy, prior: FactorizedPrior) -> float:
    """Estimated code length in bits of the latents ``z_noisy`` (shape ``(N, C)``)."""
    lik = _interval(prior, z_noisy)[0]
    return float(-np.log2(np.maximum(lik, LIKELIHOOD_FLOOR)).sum())


def latent_rate_and_grad(z_noisy, prior: FactorizedPrior):
    """Bits plus gradients with respect to ``z_noisy`` and the prior parameters."""
    z_noisy = np.asarray(z_noisy, float)
    n = z_noisy.shape[0]
    lik, upper, lower, cache = _interval(prior, z_noisy)
    floored = lik < LIKELIHOOD_FLOOR
    bits = float(-np.log2(np.where(floored, LIKELIHOOD_FLOOR, lik)).sum())
    glik = np.where(floored, 0.0, -1.0 / (np.where(floored, 1.0, lik) * np.log(2.0)))
    su, sl = sigmoid(upper), sigmoid(lower)
    gf = np.concatenate([glik * su * (1.0 - su), -glik * sl * (1.0 - sl)], axis=0)
    gx, grads = prior.logits_backward(gf, cache)
    return bits, gx[:n] + gx[n:], grads


# ---------------------------------------------------------------------------
# Coding tables


@dataclass(frozen=True)
class CodingTable:
    """One escape-capable frequency table per latent channel."""

    channels: tuple

    def __getitem__(self, c: int) -> FrequencyTable:
        return self.channels[c]

    def __len__(self):
        return len(self.channels)

    def for_latents(self, n_positions: int) -> list:
        """Per-symbol tables for a latent flattened as ``(positions, channels)``."""
        return list(self.channels) * n_positions

    def to_bytes(self) -> bytes:
        out = bytearray()
        for t in self.channels:
            out += np.int64(t.offset).tobytes() + np.asarray(t.freqs, "<u4").tobytes()
        return bytes(out)


def prior_median(prior: FactorizedPrior, channel: int, lo: int = -4096, hi: int = 4096) -> int:
    """Smallest integer ``n`` with ``c(n) >= 1/2`` (exact arithmetic)."""
    half = _exact.dec(0.5)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if prior.exact_cdf(channel, mid) >= half:
            hi = mid
        else:
            lo = mid
    return hi


def support_bounds(prior: FactorizedPrior, latent_range) -> list[tuple[int, int]]:
    """Per-channel ``[mu - 32, mu + 32]`` clipped to the observed range +- 8."""
    bounds = []
    for c in range(prior.channels):
        mu = prior_median(prior, c)
        lo, hi = int(latent_range[c][0]), int(latent_range[c][1])
        n_min = max(mu - SUPPORT_HALF_WIDTH, lo - SUPPORT_MARGIN)
        n_max = min(mu + SUPPORT_HALF_WIDTH, hi + SUPPORT_MARGIN)
        if n_min > n_max:
            n_min = n_max = min(max(mu, lo), hi)
        bounds.append((n_min, n_max))
    return bounds


def quantize_pmf(masses) -> list[int]:
    """Integer frequencies summing to 2**16 with every entry >= 1.

    ``masses`` are exact decimals; the leftover after add-one flooring goes to
    the most probable symbol (lowest index on ties).
    """
    n = len(masses)
    with _exact.context():
        return _quantize_pmf(masses, n)


def _quantize_pmf(masses, n):
    total = sum(masses)
    budget = PROB_ONE - n
    freqs = [1 + int((m / total) * budget) for m in masses]
    top = max(range(n), key=lambda i: (masses[i], -i))
    freqs[top] += PROB_ONE - sum(freqs)
    return freqs


def build_coding_tables(prior: FactorizedPrior, support) -> CodingTable:
    """Exact-arithmetic frequency tables; ``support`` is ``[(n_min, n_max)]`` per channel."""
    tables = []
    for c, (n_min, n_max) in enumerate(support):
        edges = [prior.exact_cdf(c, n - 0.5) for n in range(n_min, n_max + 2)]
        with _exact.context():
            masses = [edges[i + 1] - edges[i] for i in range(len(edges) - 1)]
            masses.append(edges[0] + (1 - edges[-1]))
        tables.append(FrequencyTable.from_frequencies(quantize_pmf(masses), offset=n_min, escape=True))
    return CodingTable(tuple(tables))
