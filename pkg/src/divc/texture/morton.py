"""Morton (Z-order) codes and the rank-based chart slot assignment.

3D codes interleave with y as the most significant bit of each triple:
``M3(x, y, z) = sum_b (4 y_b + 2 x_b + z_b) 8**b``. 2D codes use
``M2(u, v) = sum_b (2 u_b + v_b) 4**b``.
"""

from __future__ import annotations

import numpy as np

MORTON3_BITS = 21
MORTON2_BITS = 32


def _spread(a, bits: int, gap: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.uint64)
    out = np.zeros_like(a)
    for b in range(bits):
        out |= ((a >> np.uint64(b)) & np.uint64(1)) << np.uint64(b * gap)
    return out


def _gather(code, bits: int, gap: int, shift: int) -> np.ndarray:
    code = np.asarray(code, dtype=np.uint64)
    out = np.zeros_like(code)
    for b in range(bits):
        out |= ((code >> np.uint64(b * gap + shift)) & np.uint64(1)) << np.uint64(b)
    return out


def _check(coords, bits: int):
    for c in coords:
        c = np.asarray(c)
        if np.any(c < 0) or np.any(c >= (1 << bits)):
            raise ValueError(f"Morton coordinates must lie in [0, 2**{bits})")


def morton3(x, y, z):
    _check((x, y, z), MORTON3_BITS)
    code = (_spread(y, MORTON3_BITS, 3) << np.uint64(2)) | (_spread(x, MORTON3_BITS, 3) << np.uint64(1)) \
        | _spread(z, MORTON3_BITS, 3)
    return int(code) if code.ndim == 0 else code


def morton3_inv(code):
    code = np.asarray(code, dtype=np.uint64)
    x = _gather(code, MORTON3_BITS, 3, 1)
    y = _gather(code, MORTON3_BITS, 3, 2)
    z = _gather(code, MORTON3_BITS, 3, 0)
    if code.ndim == 0:
        return int(x), int(y), int(z)
    return x, y, z


def morton2(u, v):
    _check((u, v), MORTON2_BITS)
    code = (_spread(u, MORTON2_BITS, 2) << np.uint64(1)) | _spread(v, MORTON2_BITS, 2)
    return int(code) if code.ndim == 0 else code


def morton2_inv(code):
    code = np.asarray(code, dtype=np.uint64)
    u = _gather(code, MORTON2_BITS, 2, 1)
    v = _gather(code, MORTON2_BITS, 2, 0)
    if code.ndim == 0:
        return int(u), int(v)
    return u, v


def assign_chart_slots(block_indices) -> dict:
    """``{(x, y, z): (u, v)}`` with ``(u, v) = M2^-1(rank(M3(x, y, z)))``."""
    coords = np.asarray(block_indices, dtype=np.int64).reshape(-1, 3)
    if len({tuple(c) for c in coords.tolist()}) != len(coords):
        raise ValueError("block indices must be distinct")
    codes = morton3(coords[:, 0], coords[:, 1], coords[:, 2])
    order = np.argsort(codes, kind="stable")
    rank = np.empty(len(coords), dtype=np.int64)
    rank[order] = np.arange(len(coords))
    u, v = morton2_inv(rank)
    return {tuple(c): (int(a), int(b)) for c, a, b in zip(coords.tolist(), np.atleast_1d(u), np.atleast_1d(v))}


def slot_grid_side(n_blocks: int) -> int:
    """Slots per atlas side: ``2**ceil(log4 n)`` (so ranks ``0..n-1`` all fit)."""
    side = 1
    while side * side < n_blocks:
        side *= 2
    return side


def slot_coherence(blocks_a, blocks_b) -> float:
    """Frame-to-frame atlas coherence in ``[0, 1]``.

    Over blocks present in both frames (taken in Morton order), the fraction
    whose slot code shifted by the same amount as a Morton-adjacent common
    block: such blocks move through the atlas as contiguous runs, i.e. their
    slots differ only by a shared rank offset.
    """
    sa, sb = assign_chart_slots(blocks_a), assign_chart_slots(blocks_b)
    common = sorted(set(sa) & set(sb), key=lambda k: morton3(*k))
    if len(common) < 2:
        return 1.0
    d = np.array([morton2(*sb[k]) - morton2(*sa[k]) for k in common])
    run = np.zeros(len(d), dtype=bool)
    run[1:] |= d[1:] == d[:-1]
    run[:-1] |= d[:-1] == d[1:]
    return float(run.mean())
