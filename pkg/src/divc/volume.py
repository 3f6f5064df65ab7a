"""TSDF volumes: synthetic scenes, occupied-block extraction, index coding and file IO."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_VOXEL_SIZE = 5.0
DEFAULT_TAU = 10.0
DEFAULT_BLOCK_SIZE = 8

VOLUME_MAGIC = b"TSDF"
VOLUME_VERSION = 1


class VolumeError(ValueError):
    pass


@dataclass(frozen=True)
class TsdfVolume:
    """Dense grid of truncated signed distances, indexed ``values[x, y, z]``.

    Distances are in mm, positive outside the surface and negative inside.
    """

    values: np.ndarray
    voxel_size: float = DEFAULT_VOXEL_SIZE
    tau: float = DEFAULT_TAU
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 3 or min(values.shape) < 1:
            raise VolumeError(f"expected a non-empty 3D grid, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise VolumeError("volume contains non-finite values")
        if np.abs(values).max() > np.float32(self.tau):
            raise VolumeError("volume values exceed the truncation distance")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.values.shape)

    def positive(self) -> np.ndarray:
        """Boolean sign grid; an exact zero counts as positive."""
        return self.values >= 0

    def padded(self, k: int) -> "TsdfVolume":
        """Pad up to a multiple of ``k`` along each axis with ``+tau`` (empty space)."""
        pad = [(0, (-d) % k) for d in self.dims]
        if not any(p for _, p in pad):
            return self
        values = np.pad(self.values, pad, constant_values=np.float32(self.tau))
        return TsdfVolume(values, self.voxel_size, self.tau, self.origin)

    def voxel_positions(self) -> np.ndarray:
        """World positions (mm) of every voxel, shape ``(W, H, D, 3)``."""
        axes = [np.arange(d, dtype=np.float64) for d in self.dims]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return self.origin + self.voxel_size * grid


@dataclass(frozen=True)
class Block:
    index: tuple[int, int, int]
    values: np.ndarray


@dataclass(frozen=True)
class BlockIndexStream:
    sorted_indices: np.ndarray
    deltas: np.ndarray


def check_block_size(k: int) -> None:
    if k < 2 or k & (k - 1):
        raise VolumeError(f"block size must be a power of two >= 2, got {k}")


# ---------------------------------------------------------------------------
# Analytic scenes


@dataclass(frozen=True)
class Sphere:
    center: Sequence[float]
    radius: float

    def sdf(self, p: np.ndarray) -> np.ndarray:
        return np.linalg.norm(p - np.asarray(self.center, float), axis=-1) - self.radius


@dataclass(frozen=True)
class Box:
    center: Sequence[float]
    half_extents: Sequence[float]

    def sdf(self, p: np.ndarray) -> np.ndarray:
        q = np.abs(p - np.asarray(self.center, float)) - np.asarray(self.half_extents, float)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside


@dataclass(frozen=True)
class Torus:
    """Torus around the y axis (the vertical axis)."""

    center: Sequence[float]
    major: float
    minor: float

    def sdf(self, p: np.ndarray) -> np.ndarray:
        d = p - np.asarray(self.center, float)
        ring = np.hypot(d[..., 0], d[..., 2]) - self.major
        return np.hypot(ring, d[..., 1]) - self.minor


@dataclass(frozen=True)
class SmoothUnion:
    a: object
    b: object
    blend: float

    def sdf(self, p: np.ndarray) -> np.ndarray:
        da, db = self.a.sdf(p), self.b.sdf(p)
        h = np.clip(0.5 + 0.5 * (db - da) / self.blend, 0.0, 1.0)
        return db + (da - db) * h - self.blend * h * (1.0 - h)


@dataclass(frozen=True)
class SceneSpec:
    """Union of analytic primitives (minimum of their distances)."""

    primitives: tuple

    def sdf(self, p: np.ndarray) -> np.ndarray:
        out = self.primitives[0].sdf(p)
        for prim in self.primitives[1:]:
            out = np.minimum(out, prim.sdf(p))
        return out


def named_scene(name: str, dims: Sequence[int], voxel_size: float) -> SceneSpec:
    """Preset scenes centred in a grid of ``dims`` voxels."""
    extent = np.asarray(dims, float) * voxel_size
    c = (extent - voxel_size) / 2.0
    r = 0.3 * extent.min()
    if name == "sphere":
        return SceneSpec((Sphere(c, r),))
    if name == "box":
        return SceneSpec((Box(c, (0.8 * r, 0.6 * r, 0.7 * r)),))
    if name == "torus":
        return SceneSpec((Torus(c, 0.6 * r, 0.3 * r),))
    if name == "blend":
        off = np.array([0.45 * r, 0.1 * r, 0.0])
        return SceneSpec((SmoothUnion(Sphere(c - off, 0.6 * r), Box(c + off, (0.45 * r,) * 3), 0.3 * r),))
    raise VolumeError(f"unknown scene {name!r}; choose sphere, box, torus or blend")


def random_scene(rng: np.random.Generator, dims: Sequence[int], voxel_size: float) -> SceneSpec:
    """Random composition of one to three primitives, sized to stay inside the grid."""
    extent = np.asarray(dims, float) * voxel_size
    lo = extent.min()
    prims = []
    for _ in range(int(rng.integers(1, 4))):
        kind = rng.integers(0, 4)
        size = rng.uniform(0.12, 0.3) * lo
        centre = rng.uniform(size + 2 * voxel_size, extent - size - 2 * voxel_size)
        if kind == 0:
            prim = Sphere(centre, size)
        elif kind == 1:
            prim = Box(centre, rng.uniform(0.5, 1.0, 3) * size)
        elif kind == 2:
            prim = Torus(centre, 0.7 * size, rng.uniform(0.2, 0.35) * size)
        else:
            other = centre + rng.uniform(-0.6, 0.6, 3) * size
            prim = SmoothUnion(Sphere(centre, 0.7 * size), Box(other, rng.uniform(0.3, 0.6, 3) * size), 0.3 * size)
        prims.append(prim)
    return SceneSpec(tuple(prims))


def synth_volume(
    scene: SceneSpec,
    dims: Sequence[int],
    voxel_size: float = DEFAULT_VOXEL_SIZE,
    tau: float = DEFAULT_TAU,
    k: int = DEFAULT_BLOCK_SIZE,
    origin: Sequence[float] = (0.0, 0.0, 0.0),
) -> TsdfVolume:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d <= 0 or d % k for d in dims):
        raise VolumeError(f"dims {dims} must be positive multiples of the block size {k}")
    grid = TsdfVolume(np.zeros(dims, np.float32), voxel_size, tau, origin)
    d = scene.sdf(grid.voxel_positions())
    return TsdfVolume(np.clip(d, -tau, tau).astype(np.float32), voxel_size, tau, origin)


# ---------------------------------------------------------------------------
# Blocks


def crossing_voxels(positive: np.ndarray) -> np.ndarray:
    """Voxels that are an endpoint of an axis edge with a sign change."""
    mark = np.zeros(positive.shape, bool)
    for axis in range(positive.ndim):
        n = positive.shape[axis]
        a = positive.take(np.arange(n - 1), axis=axis)
        b = positive.take(np.arange(1, n), axis=axis)
        flip = a != b
        lo = [slice(None)] * positive.ndim
        hi = [slice(None)] * positive.ndim
        lo[axis] = slice(0, n - 1)
        hi[axis] = slice(1, n)
        mark[tuple(lo)] |= flip
        mark[tuple(hi)] |= flip
    return mark


def block_grid_shape(dims: Sequence[int], k: int) -> tuple[int, int, int]:
    return tuple(int(d) // k for d in dims)


def linear_block_index(idx: np.ndarray, grid: Sequence[int]) -> np.ndarray:
    """Row-major, x-fastest linearisation of block coordinates."""
    idx = np.asarray(idx, np.int64)
    return idx[..., 0] + grid[0] * (idx[..., 1] + grid[1] * idx[..., 2])


def unlinear_block_index(lin: np.ndarray, grid: Sequence[int]) -> np.ndarray:
    lin = np.asarray(lin, np.int64)
    x = lin % grid[0]
    y = (lin // grid[0]) % grid[1]
    z = lin // (grid[0] * grid[1])
    return np.stack([x, y, z], axis=-1)


def occupied_block_mask(v: TsdfVolume, k: int) -> np.ndarray:
    """Blocks holding at least one voxel that takes part in a sign change.

    Crossings that straddle a block face mark the blocks on both sides, so
    every voxel touching the surface is inside some occupied block.
    """
    if any(d % k for d in v.dims):
        raise VolumeError(f"dims {v.dims} are not multiples of k={k}")
    grid = block_grid_shape(v.dims, k)
    mark = crossing_voxels(v.positive())
    return mark.reshape(grid[0], k, grid[1], k, grid[2], k).any(axis=(1, 3, 5))


def block_view(values: np.ndarray, k: int) -> np.ndarray:
    """Reshape ``(W, H, D)`` into ``(gx, gy, gz, k, k, k)``."""
    gx, gy, gz = (d // k for d in values.shape)
    return values.reshape(gx, k, gy, k, gz, k).transpose(0, 2, 4, 1, 3, 5)


def extract_occupied_blocks(v: TsdfVolume, k: int = DEFAULT_BLOCK_SIZE) -> tuple[list[Block], BlockIndexStream]:
    check_block_size(k)
    grid = block_grid_shape(v.dims, k)
    occ = occupied_block_mask(v, k)
    coords = np.argwhere(occ)
    lin = linear_block_index(coords, grid)
    order = np.argsort(lin, kind="stable")
    coords, lin = coords[order], lin[order]
    view = block_view(v.values, k)
    blocks = [Block(tuple(int(c) for c in xyz), view[tuple(xyz)].copy()) for xyz in coords]
    return blocks, BlockIndexStream(lin, delta_encode_indices(lin))


def delta_encode_indices(indices) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx[0] < 0 or np.any(np.diff(idx) < 1)):
        raise VolumeError("block indices must be non-negative and strictly ascending")
    return np.diff(idx, prepend=np.int64(0)) if idx.size else idx


def delta_decode_indices(deltas) -> np.ndarray:
    d = np.asarray(deltas, dtype=np.int64).reshape(-1)
    return np.cumsum(d)


# ---------------------------------------------------------------------------
# File IO

_HEADER = struct.Struct("<4sB3I2f3f")


def volume_to_bytes(v: TsdfVolume) -> bytes:
    head = _HEADER.pack(VOLUME_MAGIC, VOLUME_VERSION, *v.dims, v.voxel_size, v.tau, *v.origin)
    # x varies fastest on disk
    return head + np.asarray(v.values, "<f4").tobytes(order="F")


def volume_from_bytes(data: bytes) -> TsdfVolume:
    if len(data) < _HEADER.size:
        raise VolumeError("truncated volume header")
    magic, version, w, h, d, voxel, tau, ox, oy, oz = _HEADER.unpack_from(data)
    if magic != VOLUME_MAGIC:
        raise VolumeError(f"bad volume magic {magic!r}")
    if version != VOLUME_VERSION:
        raise VolumeError(f"unsupported volume version {version}")
    n = w * h * d
    body = data[_HEADER.size:]
    if len(body) != 4 * n:
        raise VolumeError(f"expected {4 * n} value bytes, found {len(body)}")
    values = np.frombuffer(body, "<f4").reshape((w, h, d), order="F")
    return TsdfVolume(values.astype(np.float32), float(voxel), float(tau), (ox, oy, oz))


def write_volume(path, v: TsdfVolume) -> None:
    Path(path).write_bytes(volume_to_bytes(v))


def read_volume(path) -> TsdfVolume:
    return volume_from_bytes(Path(path).read_bytes())
