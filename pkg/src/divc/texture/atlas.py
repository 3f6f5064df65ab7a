"""Per-block charts and the Morton-ordered texture atlas.

Every occupied block gets one square chart. Its triangles are split into
groups of similar normal, each group is projected onto its tangent plane,
boxed by a minimum-area rectangle and packed into the chart. Charts sit in
atlas slots ``M2^-1(rank(M3(block)))``. Everything here is a deterministic
function of the decoded volume, so sender and receiver derive the same UVs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..surface.marching import Mesh, mesh_from_volume
from ..volume import TsdfVolume, occupied_block_mask
from .calipers import min_area_rect
from .morton import assign_chart_slots, slot_grid_side
from .packing import GUTTER, pack_rects

GROUP_ANGLE_DEG = 60.0
MIN_SLOT_PX = 8
SHRINK = 0.9


@dataclass
class TriangleGroup:
    triangles: np.ndarray      # mesh triangle ids
    normal: np.ndarray         # unit mean normal
    frame: np.ndarray          # (2, 3) tangent axes
    local: np.ndarray          # (n, 3, 2) corner coordinates inside the fitted rectangle (mm)
    size: tuple                # rectangle extents (mm)


@dataclass
class Chart:
    block: tuple
    slot: tuple
    groups: list
    scale: float = 0.0         # pixels per mm inside this chart
    placements: list = field(default_factory=list)


@dataclass
class Atlas:
    resolution: int            # atlas side in pixels
    slot_size: int
    charts: dict               # block -> Chart
    corner_uv: np.ndarray      # (T, 3, 2) pixel coordinates, x right / y down
    triangle_block: np.ndarray  # (T, 3)

    def normalized_uvs(self) -> np.ndarray:
        """OBJ texture coordinates (v pointing up), ``(T * 3, 2)``."""
        uv = self.corner_uv.reshape(-1, 2) / self.resolution
        return np.stack([uv[:, 0], 1.0 - uv[:, 1]], axis=1)

    def slot_of_triangle(self) -> np.ndarray:
        out = np.zeros((len(self.triangle_block), 2), dtype=np.int64)
        for i, b in enumerate(map(tuple, self.triangle_block.tolist())):
            out[i] = self.charts[b].slot
        return out


# ---------------------------------------------------------------------------
# triangle ownership and grouping


def triangle_blocks(mesh: Mesh, k: int) -> np.ndarray:
    """Owning block of each triangle: the block holding the lower voxel of the
    grid edge with the smallest id among the triangle's three vertices."""
    first = mesh.triangles.min(axis=1)  # vertex order follows edge id
    return mesh.edge_lower_voxels()[first] // k


def triangle_adjacency(triangles: np.ndarray) -> list[list[int]]:
    """Triangles sharing an edge, per triangle, ascending."""
    t = np.asarray(triangles)
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e = np.sort(e, axis=1)
    owner = np.tile(np.arange(len(t)), 3)
    order = np.lexsort((owner, e[:, 1], e[:, 0]))
    e, owner = e[order], owner[order]
    adj = [[] for _ in range(len(t))]
    same = np.all(e[1:] == e[:-1], axis=1)
    start = 0
    for i in range(1, len(e) + 1):
        if i == len(e) or not same[i - 1]:
            ids = owner[start:i].tolist()
            for a in ids:
                adj[a].extend(b for b in ids if b != a)
            start = i
    return [sorted(set(a)) for a in adj]


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.array([0.0, 0.0, 1.0])


def group_triangles(normals, areas, adjacency, angle_deg: float = GROUP_ANGLE_DEG) -> list[list[int]]:
    """Greedy normal clustering over local triangle ids.

    Seed with the largest unassigned triangle (lowest id on ties), then grow
    through shared edges, absorbing triangles whose normal is within
    ``angle_deg`` of the group's running mean normal.
    """
    normals = np.asarray(normals, dtype=np.float64)
    areas = np.asarray(areas, dtype=np.float64)
    n = len(areas)
    unit = np.array([_unit(v) for v in normals]) if n else normals
    cos_t = math.cos(math.radians(angle_deg))
    assigned = np.zeros(n, dtype=bool)
    order = sorted(range(n), key=lambda i: (-areas[i], i))
    groups = []
    for seed in order:
        if assigned[seed]:
            continue
        members = [seed]
        assigned[seed] = True
        acc = normals[seed].copy()
        mean = unit[seed]
        frontier = list(adjacency[seed])
        while frontier:
            frontier = sorted(set(j for j in frontier if not assigned[j]))
            grown = []
            for j in frontier:
                if unit[j] @ mean > cos_t:
                    members.append(j)
                    assigned[j] = True
                    acc = acc + normals[j]
                    mean = _unit(acc)
                    grown.append(j)
            frontier = [m for j in grown for m in adjacency[j]]
        groups.append(sorted(members))
    return groups


def tangent_frame(normal) -> np.ndarray:
    """Two unit axes spanning the plane orthogonal to ``normal``."""
    n = _unit(np.asarray(normal, dtype=np.float64))
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(n)))] = 1.0
    t1 = _unit(helper - (helper @ n) * n)
    t2 = np.cross(n, t1)
    return np.stack([t1, t2])


def overlap_matrix(tris, eps: float = 1e-9) -> np.ndarray:
    """``O[i, j]``: interiors of 2D triangles ``i`` and ``j`` intersect (separating axes).

    Triangles of (near) zero area cover no interior and never overlap.
    """
    t = np.asarray(tris, dtype=np.float64).reshape(-1, 3, 2)
    n = len(t)
    edges = np.roll(t, -1, axis=1) - t
    axes = np.stack([-edges[..., 1], edges[..., 0]], axis=-1)
    norm = np.linalg.norm(axes, axis=-1, keepdims=True)
    axes = np.divide(axes, norm, out=np.zeros_like(axes), where=norm > 0)
    proj = np.einsum("nad,mpd->nmap", axes, t)          # axes of n, points of m
    lo, hi = proj.min(axis=3), proj.max(axis=3)         # (n, m, 3)
    own_lo = lo[np.arange(n), np.arange(n)]             # (n, 3) own extent on own axes
    own_hi = hi[np.arange(n), np.arange(n)]
    sep_i = (own_hi[:, None] <= lo + eps) | (hi <= own_lo[:, None] + eps)   # axes of i separate
    sep = sep_i.any(axis=2)
    sep = sep | sep.T
    area2 = np.abs(edges[:, 0, 0] * edges[:, 2, 1] - edges[:, 0, 1] * edges[:, 2, 0])
    flat = area2 <= eps
    out = ~sep
    out[flat, :] = False
    out[:, flat] = False
    np.fill_diagonal(out, False)
    return out


def triangles_overlap(a, b, eps: float = 1e-9) -> bool:
    return bool(overlap_matrix(np.stack([np.asarray(a, float), np.asarray(b, float)]), eps)[0, 1])


def _fold_free(proj: np.ndarray, members: list[int]) -> tuple[list[int], list[int]]:
    """Split off triangles whose projection overlaps an earlier kept one."""
    over = overlap_matrix(proj)
    kept = np.zeros(len(members), dtype=bool)
    for i in range(len(members)):
        kept[i] = not over[i, kept].any()
    return [m for m, k in zip(members, kept) if k], [m for m, k in zip(members, kept) if not k]


def _regroup(subset: list[int], normals, areas, adjacency) -> list[list[int]]:
    pos = {t: i for i, t in enumerate(subset)}
    sub_adj = [[pos[j] for j in adjacency[t] if j in pos] for t in subset]
    return [[subset[i] for i in g] for g in group_triangles(normals[subset], areas[subset], sub_adj)]


def build_groups(corners: np.ndarray, tri_ids: np.ndarray) -> list[TriangleGroup]:
    """Groups for one block; ``corners`` is ``(n, 3, 3)`` positions of its triangles.

    A group whose projection folds over itself keeps the triangles that do not
    overlap earlier ones; the rest are regrouped on their own.
    """
    normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    areas = 0.5 * np.linalg.norm(normals, axis=1)
    # shared vertices have bit-identical positions, which gives the adjacency
    keys: dict = {}
    vid = np.array([[keys.setdefault(tuple(c), len(keys)) for c in tri] for tri in corners.tolist()],
                   dtype=np.int64).reshape(-1, 3)
    adjacency = triangle_adjacency(vid)
    out = []
    pending = _regroup(list(range(len(corners))), normals, areas, adjacency)
    while pending:
        members = pending.pop(0)
        frame = tangent_frame(normals[members].sum(axis=0))
        members, dropped = _fold_free(corners[members] @ frame.T, members)
        if dropped:
            pending = _regroup(dropped, normals, areas, adjacency) + pending
        normal = _unit(normals[members].sum(axis=0))
        frame = tangent_frame(normal)
        proj = (corners[members] @ frame.T).reshape(-1, 2)
        rect = min_area_rect(proj)
        local = np.clip(rect.to_local(proj), 0.0, [rect.width, rect.height]).reshape(-1, 3, 2)
        out.append(TriangleGroup(tri_ids[members], normal, frame, local, (rect.width, rect.height)))
    return out


# ---------------------------------------------------------------------------
# chart packing


def pack_chart(groups: list[TriangleGroup], slot_size: int) -> tuple[float, list]:
    """Largest uniform pixels-per-mm (shrinking by 10% steps) at which all
    group rectangles pack into the chart."""
    inner = slot_size - 2 * GUTTER
    longest = max(max(g.size) for g in groups)
    scale = inner / longest if longest > 0 else 1.0
    while True:
        sizes = [(max(1, math.ceil(g.size[0] * scale)), max(1, math.ceil(g.size[1] * scale))) for g in groups]
        spots = pack_rects(sizes, slot_size)
        if spots is not None:
            return scale, spots
        if all(w == 1 and h == 1 for w, h in sizes):
            raise ValueError(f"{len(groups)} groups cannot fit a {slot_size}px chart")
        scale *= SHRINK


def build_atlas(mesh: Mesh, occupied_blocks, block_size: int, resolution: int = 512) -> Atlas:
    """Charts for every occupied block and per-corner atlas UVs (pixels)."""
    blocks = [tuple(int(c) for c in b) for b in np.asarray(occupied_blocks).reshape(-1, 3).tolist()]
    slots = assign_chart_slots(blocks) if blocks else {}
    side = slot_grid_side(max(len(blocks), 1))
    slot_size = max(MIN_SLOT_PX, resolution // side)
    res = slot_size * side
    owner = triangle_blocks(mesh, block_size) if mesh.n_triangles else np.zeros((0, 3), np.int64)
    corners = mesh.vertices[mesh.triangles]
    uv = np.zeros((mesh.n_triangles, 3, 2))
    charts = {}
    by_block: dict = {}
    for t, b in enumerate(map(tuple, owner.tolist())):
        by_block.setdefault(b, []).append(t)
    for b in blocks:
        tri_ids = np.asarray(by_block.get(b, []), dtype=np.int64)
        groups = build_groups(corners[tri_ids], tri_ids) if len(tri_ids) else []
        chart = Chart(b, slots[b], groups)
        if groups:
            chart.scale, chart.placements = pack_chart(groups, slot_size)
            ox, oy = slots[b][0] * slot_size, slots[b][1] * slot_size
            for g, (px, py) in zip(groups, chart.placements):
                uv[g.triangles] = np.array([ox + px, oy + py]) + g.local * chart.scale
        charts[b] = chart
    missing = set(by_block) - set(slots)
    if missing:
        raise ValueError(f"triangles owned by unoccupied blocks {sorted(missing)[:3]}")
    return Atlas(res, slot_size, charts, uv, owner)


def atlas_for_volume(v: TsdfVolume, block_size: int, resolution: int = 512, signs=None) -> tuple[Mesh, Atlas]:
    """Mesh + atlas from a (decoded) volume; what both ends of the link run."""
    mesh = mesh_from_volume(v, signs)
    occ = np.argwhere(occupied_block_mask(v, block_size))
    return mesh, build_atlas(mesh, occ, block_size, resolution)


def recompute_uvs_receiver(decoded: TsdfVolume, block_size: int, resolution: int = 512) -> np.ndarray:
    """Per-corner atlas UVs, ``(T, 3, 2)``, recomputed from the decoded volume alone."""
    return atlas_for_volume(decoded, block_size, resolution)[1].corner_uv
