"""Marching cubes with externally supplied signs.

Cell corners follow the usual Lorensen-Cline/Bourke numbering, relative to
the cell's lowest voxel::

    0 (0,0,0)  1 (1,0,0)  2 (1,1,0)  3 (0,1,0)
    4 (0,0,1)  5 (1,0,1)  6 (1,1,1)  7 (0,1,1)

A corner sets bit ``c`` of the 8-bit configuration when it is negative.
Each grid edge gets a global id ``axis + 3 * voxel_linear_index`` of its
lower endpoint, so vertices on the same edge are shared between cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._tables import TRI_TABLE

T_EPS = 1e-4
MIN_TRIANGLE_AREA = 1e-12

CORNERS = np.array(
    [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)],
    dtype=np.int64,
)
# cube edge -> (lower endpoint offset, axis)
EDGE_LOWER = np.array(
    [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 0), (0, 0, 1), (1, 0, 1), (0, 1, 1), (0, 0, 1),
     (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)],
    dtype=np.int64,
)
EDGE_AXIS = np.array([0, 1, 0, 1, 0, 1, 0, 1, 2, 2, 2, 2], dtype=np.int64)
_TRI = np.array(TRI_TABLE, dtype=np.int64)
TRIANGLE_COUNT = (_TRI >= 0).sum(axis=1) // 3


class SurfaceError(ValueError):
    pass


@dataclass
class Mesh:
    vertices: np.ndarray      # (V, 3) mm
    triangles: np.ndarray     # (T, 3) vertex indices
    vertex_edges: np.ndarray  # (V,) global grid-edge id of each vertex, ascending
    configs: np.ndarray       # (W-1, H-1, D-1) uint8 cell configurations
    dims: tuple
    voxel_size: float = 1.0
    origin: tuple = (0.0, 0.0, 0.0)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_normals(self) -> np.ndarray:
        """Unnormalised (area-weighted x2) normals."""
        p = self.vertices[self.triangles]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    def triangle_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.triangle_normals(), axis=1)

    def edge_lower_voxels(self) -> np.ndarray:
        """Lower endpoint voxel ``(x, y, z)`` of every vertex's grid edge."""
        lin = self.vertex_edges // 3
        W, H, _ = self.dims
        return np.stack([lin % W, (lin // W) % H, lin // (W * H)], axis=1)


def cell_configs(positive: np.ndarray) -> np.ndarray:
    """8-bit corner configuration of every cell; bit ``c`` set when corner ``c`` is negative."""
    neg = ~np.asarray(positive, dtype=bool)
    W, H, D = neg.shape
    cfg = np.zeros((W - 1, H - 1, D - 1), dtype=np.uint8)
    for c, (dx, dy, dz) in enumerate(CORNERS):
        cfg |= neg[dx:dx + W - 1, dy:dy + H - 1, dz:dz + D - 1].astype(np.uint8) << c
    return cfg


def edge_t(d0, d1) -> np.ndarray:
    """Interpolation parameter along an edge, clamped to ``[eps, 1 - eps]``."""
    d0 = np.asarray(d0, dtype=np.float64)
    d1 = np.asarray(d1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = d0 / (d0 - d1)
    t = np.where(np.isfinite(t), t, 0.5)
    return np.clip(t, T_EPS, 1.0 - T_EPS)


def marching_cubes(values, signs=None, voxel_size: float = 1.0, origin=(0.0, 0.0, 0.0)) -> Mesh:
    """Triangulate the sign boundary of a grid.

    ``signs`` is a boolean positive-mask (defaults to ``values >= 0``); values
    only position vertices along edges, using ``|values|`` signed by ``signs``.
    """
    values = np.asarray(values, dtype=np.float64)
    positive = values >= 0 if signs is None else np.asarray(signs, dtype=bool)
    if positive.shape != values.shape or values.ndim != 3:
        raise SurfaceError(f"sign grid {positive.shape} does not match value grid {values.shape}")
    W, H, D = values.shape
    origin = np.asarray(origin, dtype=np.float64)
    cfg = cell_configs(positive) if min(W, H, D) > 1 else np.zeros((0, 0, 0), np.uint8)
    cells = np.argwhere((cfg != 0) & (cfg != 255))
    empty = Mesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64), np.zeros(0, np.int64), cfg,
                 (W, H, D), float(voxel_size), tuple(origin))
    if len(cells) == 0:
        return empty
    local = _TRI[cfg[tuple(cells.T)]]                      # (N, 15) cube edges
    valid = local >= 0
    cell_of = np.broadcast_to(np.arange(len(cells))[:, None], local.shape)[valid]
    e = local[valid]
    lower = cells[cell_of] + EDGE_LOWER[e]
    axis = EDGE_AXIS[e]
    gid = axis + 3 * (lower[:, 0] + W * (lower[:, 1] + H * lower[:, 2]))
    edges, inverse = np.unique(gid, return_inverse=True)
    # the table winds triangles towards the negative side; flip so that
    # normals point outwards (towards positive values)
    tris = inverse.reshape(-1, 3)[:, [0, 2, 1]].astype(np.int64)

    lin = edges // 3
    ax = edges % 3
    p0 = np.stack([lin % W, (lin // W) % H, lin // (W * H)], axis=1)
    p1 = p0 + np.eye(3, dtype=np.int64)[ax]
    mag = np.abs(values)
    d0 = np.where(positive[tuple(p0.T)], 1.0, -1.0) * mag[tuple(p0.T)]
    d1 = np.where(positive[tuple(p1.T)], 1.0, -1.0) * mag[tuple(p1.T)]
    t = edge_t(d0, d1)
    verts = origin + voxel_size * (p0 + t[:, None] * (p1 - p0))

    mesh = Mesh(verts, tris, edges, cfg, (W, H, D), float(voxel_size), tuple(origin))
    keep = mesh.triangle_areas() > MIN_TRIANGLE_AREA
    if not keep.all():
        mesh.triangles = tris[keep]
    return mesh


def topology_equal(m1: Mesh, m2: Mesh) -> bool:
    """Identical per-cell marching-cubes configurations."""
    return m1.configs.shape == m2.configs.shape and bool(np.array_equal(m1.configs, m2.configs))


def error_bound_check(m_orig: Mesh, m_decoded: Mesh, voxel_size: float | None = None) -> float:
    """Largest displacement between vertices on the same grid edge.

    Raises when the meshes do not share topology. When ``voxel_size`` is
    given, a displacement above it raises as well.
    """
    if not topology_equal(m_orig, m_decoded) or not np.array_equal(m_orig.vertex_edges, m_decoded.vertex_edges):
        raise SurfaceError("meshes differ in topology; vertices cannot be matched")
    if m_orig.n_vertices == 0:
        return 0.0
    disp = float(np.linalg.norm(m_orig.vertices - m_decoded.vertices, axis=1).max())
    if voxel_size is not None and disp > voxel_size:
        raise SurfaceError(f"vertex displacement {disp} exceeds the voxel size {voxel_size}")
    return disp


def mesh_from_volume(v, signs=None) -> Mesh:
    return marching_cubes(v.values, signs, v.voxel_size, v.origin)


def boundary_edges(mesh: Mesh) -> np.ndarray:
    """Undirected mesh edges used by a number of triangles other than two."""
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    return uniq[counts != 2]


def write_obj(path, mesh: Mesh, uvs=None, uv_index=None) -> None:
    """OBJ with positions, optional texture coordinates and faces.

    ``uvs`` is ``(M, 2)``; ``uv_index`` ``(T, 3)`` picks a UV per triangle corner.
    """
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices.tolist()]
    if uvs is not None:
        lines += [f"vt {u:.9g} {v:.9g}" for u, v in np.asarray(uvs).tolist()]
        for (a, b, c), (ta, tb, tc) in zip(mesh.triangles.tolist(), np.asarray(uv_index).tolist()):
            lines.append(f"f {a + 1}/{ta + 1} {b + 1}/{tb + 1} {c + 1}/{tc + 1}")
    else:
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return np.asarray(verts, dtype=np.float64).reshape(-1, 3), np.asarray(faces, dtype=np.int64).reshape(-1, 3)
