"""3D convolution primitives with hand-written backward passes.

Tensors are channels-last: ``(batch, x, y, z, channels)``. Filters have shape
``(K, K, K, C_in, C_out)``. Both convolution flavours loop over kernel taps;
each tap is a dense ``(…, C_in) @ (C_in, C_out)`` product.

``strict=True`` replaces every matrix product by an explicit channel-by-channel
multiply/add sequence. Each output element is then produced by the same
ordered chain of individually rounded IEEE operations whatever the batch size,
BLAS build or thread count, which is what the sign coder needs on both ends.
"""

from __future__ import annotations

import itertools

import numpy as np

LEAK = 0.2


def _taps(K: int):
    return itertools.product(range(K), repeat=3)


def _strided(arr, start, stride, count):
    i, j, l = start
    return arr[:, i:i + stride * count[0]:stride,
               j:j + stride * count[1]:stride,
               l:l + stride * count[2]:stride, :]


def _apply(x, w, strict: bool):
    """``x @ w`` over the trailing channel axis."""
    if not strict:
        return (x.reshape(-1, x.shape[-1]) @ w).reshape(*x.shape[:-1], w.shape[-1])
    # out[..., o] = ((x0*w0o + x1*w1o) + x2*w2o) + ..., one rounded op at a
    # time; both loop layouts below produce exactly that chain.
    rows = x.size // x.shape[-1]
    if rows < 4096:
        out = x[..., 0:1] * w[0]
        for c in range(1, w.shape[0]):
            out = out + x[..., c:c + 1] * w[c]
        return out
    xt = np.ascontiguousarray(np.moveaxis(x, -1, 0))
    out = np.empty((w.shape[1],) + xt.shape[1:])
    tmp = np.empty(xt.shape[1:])
    for o in range(w.shape[1]):
        acc = out[o]
        np.multiply(xt[0], w[0, o], out=acc)
        for c in range(1, w.shape[0]):
            np.multiply(xt[c], w[c, o], out=tmp)
            acc += tmp
    return np.moveaxis(out, 0, -1)


def conv3d_out_size(n: int, K: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - K) // stride + 1


def tconv3d_out_size(n: int, K: int, stride: int, pad: int) -> int:
    return (n - 1) * stride + K - 2 * pad


def conv3d(x, w, b, stride=1, pad=0, strict=False):
    K = w.shape[0]
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (pad, pad), (0, 0))) if pad else x
    out_sp = [conv3d_out_size(n, K, stride, pad) for n in x.shape[1:4]]
    y = np.broadcast_to(b, (x.shape[0], *out_sp, w.shape[4])).copy()
    for tap in _taps(K):
        y = y + _apply(_strided(xp, tap, stride, out_sp), w[tap], strict)
    return y


def conv3d_backward(g, x, w, stride=1, pad=0):
    K = w.shape[0]
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (pad, pad), (0, 0))) if pad else x
    out_sp = g.shape[1:4]
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    g2 = g.reshape(-1, g.shape[-1])
    for tap in _taps(K):
        i, j, l = tap
        sl = (slice(None),
              slice(i, i + stride * out_sp[0], stride),
              slice(j, j + stride * out_sp[1], stride),
              slice(l, l + stride * out_sp[2], stride),
              slice(None))
        patch = xp[sl]
        gw[tap] = patch.reshape(-1, patch.shape[-1]).T @ g2
        gxp[sl] += (g2 @ w[tap].T).reshape(*g.shape[:-1], -1)
    gb = g2.sum(axis=0)
    if pad:
        gxp = gxp[:, pad:-pad, pad:-pad, pad:-pad, :]
    return gxp, gw, gb


def tconv3d(x, w, b, stride=2, pad=0, strict=False):
    """Transposed convolution (the adjoint of :func:`conv3d` in ``x``)."""
    K = w.shape[0]
    in_sp = x.shape[1:4]
    full = [(n - 1) * stride + K for n in in_sp]
    y = np.zeros((x.shape[0], *full, w.shape[4]))
    for tap in _taps(K):
        i, j, l = tap
        sl = (slice(None),
              slice(i, i + stride * in_sp[0], stride),
              slice(j, j + stride * in_sp[1], stride),
              slice(l, l + stride * in_sp[2], stride),
              slice(None))
        y[sl] = y[sl] + _apply(x, w[tap], strict)
    if pad:
        y = y[:, pad:-pad, pad:-pad, pad:-pad, :]
    return y + b


def tconv3d_backward(g, x, w, stride=2, pad=0):
    K = w.shape[0]
    in_sp = x.shape[1:4]
    gfull = np.pad(g, ((0, 0), (pad, pad), (pad, pad), (pad, pad), (0, 0))) if pad else g
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    x2 = x.reshape(-1, x.shape[-1])
    for tap in _taps(K):
        gs = _strided(gfull, tap, stride, in_sp)
        gx += (gs.reshape(-1, gs.shape[-1]) @ w[tap].T).reshape(x.shape)
        gw[tap] = x2.T @ gs.reshape(-1, gs.shape[-1])
    gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
    return gx, gw, gb


def leaky_relu(x):
    return np.where(x > 0, x, LEAK * x)


def leaky_relu_backward(g, x):
    return np.where(x > 0, g, LEAK * g)


def sigmoid(x):
    # exp(-|x|) never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def abs_backward(g, x):
    """Subgradient of ``|x|``; zero at ``x == 0``."""
    return g * np.sign(x)
