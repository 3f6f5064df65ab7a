"""Point-to-surface distances over a triangle BVH, and the Hausdorff / Chamfer metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .marching import Mesh

LEAF_SIZE = 8


def closest_point_on_triangles(p, a, b, c) -> np.ndarray:
    """Closest points on triangles ``(a, b, c)`` to points ``p`` (all ``(N, 3)``).

    Region-by-region (vertex, edge, face) classification of the projection.
    """
    p, a, b, c = (np.asarray(t, dtype=np.float64) for t in (p, a, b, c))
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def take(mask, value):
        m = mask & ~done
        out[m] = value[m] if value.ndim == 2 else value
        done[m] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        take((d1 <= 0) & (d2 <= 0), a)
        take((d3 >= 0) & (d4 <= d3), b)
        v = d1 / (d1 - d3)
        take((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[:, None] * ab)
        take((d6 >= 0) & (d5 <= d6), c)
        w = d2 / (d2 - d6)
        take((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[:, None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        take((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v, w = vb * denom, vc * denom
        face = a + ab * v[:, None] + ac * w[:, None]
        take(np.ones(len(p), dtype=bool), face)
    # fully degenerate triangles (zero area) fall back to the nearest corner
    bad = ~np.isfinite(out).all(axis=1)
    if bad.any():
        corners = np.stack([a[bad], b[bad], c[bad]], axis=1)
        d = np.linalg.norm(corners - p[bad][:, None], axis=2)
        out[bad] = corners[np.arange(bad.sum()), d.argmin(axis=1)]
    return out


def point_triangle_distance(p, a, b, c) -> np.ndarray:
    q = closest_point_on_triangles(p, a, b, c)
    return np.linalg.norm(np.asarray(p, dtype=np.float64) - q, axis=1)


@dataclass
class TriangleBVH:
    """Median-split bounding volume hierarchy over a triangle soup."""

    tri: np.ndarray        # (T, 3, 3) corner positions, reordered into leaf order
    lo: np.ndarray         # (nodes, 3)
    hi: np.ndarray
    left: np.ndarray       # child ids, -1 for leaves
    right: np.ndarray
    start: np.ndarray      # leaf triangle range
    count: np.ndarray
    vertices: np.ndarray
    vertex_tree: cKDTree

    @classmethod
    def build(cls, vertices, triangles) -> "TriangleBVH":
        vertices = np.asarray(vertices, dtype=np.float64)
        triangles = np.asarray(triangles, dtype=np.int64)
        tri = vertices[triangles]
        if len(tri) == 0:
            raise ValueError("cannot build a BVH over an empty mesh")
        cent = tri.mean(axis=1)
        order = np.arange(len(tri))
        lo, hi, left, right, start, count = [], [], [], [], [], []

        def node(s, e):
            idx = order[s:e]
            nid = len(lo)
            lo.append(tri[idx].reshape(-1, 3).min(axis=0))
            hi.append(tri[idx].reshape(-1, 3).max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(s)
            count.append(e - s)
            if e - s > LEAF_SIZE:
                ext = cent[idx].max(axis=0) - cent[idx].min(axis=0)
                ax = int(np.argmax(ext))
                sub = np.argsort(cent[idx, ax], kind="stable")
                order[s:e] = idx[sub]
                mid = (s + e) // 2
                left[nid] = node(s, mid)
                right[nid] = node(mid, e)
                count[nid] = 0
            return nid

        node(0, len(tri))
        return cls(tri[order], np.array(lo), np.array(hi), np.array(left), np.array(right),
                   np.array(start), np.array(count), vertices, cKDTree(vertices[np.unique(triangles)]))

    def distances(self, points, chunk: int = 4096) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.concatenate([self._query(points[i:i + chunk]) for i in range(0, len(points), chunk)] or [np.zeros(0)])

    def _query(self, pts) -> np.ndarray:
        # every referenced vertex is on the surface, so its distance is an upper bound
        best = self.vertex_tree.query(pts)[0]
        pid = np.arange(len(pts))
        nid = np.zeros(len(pts), dtype=np.int64)
        while len(pid):
            q = pts[pid]
            gap = np.maximum(self.lo[nid] - q, 0) + np.maximum(q - self.hi[nid], 0)
            keep = np.einsum("ij,ij->i", gap, gap) <= best[pid] ** 2
            pid, nid = pid[keep], nid[keep]
            leaf = self.left[nid] < 0
            if leaf.any():
                lp, ln = pid[leaf], nid[leaf]
                reps = self.count[ln]
                tp = np.repeat(lp, reps)
                tt = np.repeat(self.start[ln], reps) + (np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps))
                t = self.tri[tt]
                d = point_triangle_distance(pts[tp], t[:, 0], t[:, 1], t[:, 2])
                np.minimum.at(best, tp, d)
            inner = ~leaf
            pid = np.concatenate([pid[inner], pid[inner]])
            nid = np.concatenate([self.left[nid[inner]], self.right[nid[inner]]])
        return best


def point_to_mesh_distance(points, mesh: Mesh | TriangleBVH) -> np.ndarray:
    """Exact Euclidean distance from each point to the closest triangle."""
    bvh = mesh if isinstance(mesh, TriangleBVH) else TriangleBVH.build(mesh.vertices, mesh.triangles)
    return bvh.distances(points)


def brute_force_distance(points, vertices, triangles) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = np.asarray(vertices, dtype=np.float64)[np.asarray(triangles)]
    out = np.full(len(points), np.inf)
    for t in tri:
        n = len(points)
        d = point_triangle_distance(points, np.broadcast_to(t[0], (n, 3)), np.broadcast_to(t[1], (n, 3)),
                                    np.broadcast_to(t[2], (n, 3)))
        out = np.minimum(out, d)
    return out


def _sample(mesh: Mesh, per_triangle: int, seed: int):
    """Sample points and the triangle each came from (-1 for vertices)."""
    used = np.unique(mesh.triangles)
    pts, src = [mesh.vertices[used]], [np.full(len(used), -1)]
    areas = mesh.triangle_areas()
    n = per_triangle * len(mesh.triangles)
    if n and areas.sum() > 0:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(areas), size=n, p=areas / areas.sum())
        r1, r2 = rng.random(n), rng.random(n)
        s = np.sqrt(r1)
        t = mesh.vertices[mesh.triangles[pick]]
        pts.append((1 - s)[:, None] * t[:, 0] + (s * (1 - r2))[:, None] * t[:, 1] + (s * r2)[:, None] * t[:, 2])
        src.append(pick)
    return np.concatenate(pts), np.concatenate(src)


def sample_surface(mesh: Mesh, per_triangle: int = 4, seed: int = 0) -> np.ndarray:
    """All vertices plus ``per_triangle * T`` area-weighted random surface points."""
    return _sample(mesh, per_triangle, seed)[0]


def _triangle_keys(mesh: Mesh) -> list[bytes]:
    # corner positions in a canonical order, so equal triangles compare equal
    corners = np.ascontiguousarray(mesh.vertices[mesh.triangles], dtype=np.float64)
    order = np.lexsort(corners.transpose(2, 0, 1)[::-1], axis=-1)
    return [c[o].tobytes() for c, o in zip(corners, order)]


def directed_distances(src: Mesh, dst: Mesh, per_triangle: int = 4, seed: int = 0) -> np.ndarray:
    """Distance from each sample of ``src`` to ``dst``.

    A sample drawn from a triangle that ``dst`` also contains is exactly on
    ``dst``; it gets 0 rather than the rounding residue of the projection.
    """
    pts, tri = _sample(src, per_triangle, seed)
    if len(pts) == 0:
        return np.zeros(0)
    if dst.n_triangles == 0:
        return np.full(len(pts), np.inf)
    d = point_to_mesh_distance(pts, dst)
    shared = set(_triangle_keys(dst))
    if shared and (tri >= 0).any():
        on_dst = np.array([k in shared for k in _triangle_keys(src)])
        d[(tri >= 0) & on_dst[np.maximum(tri, 0)]] = 0.0
    return d


def _both(a: Mesh, b: Mesh, per_triangle: int, seed: int):
    # the same seed on both sides keeps the metrics exactly symmetric
    return directed_distances(a, b, per_triangle, seed), directed_distances(b, a, per_triangle, seed)


def _hausdorff(dab, dba) -> float:
    return float(max(dab.max(initial=0.0), dba.max(initial=0.0)))


def _chamfer(dab, dba) -> float:
    ma = dab.mean() if len(dab) else 0.0
    mb = dba.mean() if len(dba) else 0.0
    return float(0.5 * ma + 0.5 * mb)


def hausdorff(a: Mesh, b: Mesh, per_triangle: int = 4, seed: int = 0) -> float:
    """Larger of the two directed maximum distances."""
    return _hausdorff(*_both(a, b, per_triangle, seed))


def chamfer(a: Mesh, b: Mesh, per_triangle: int = 4, seed: int = 0) -> float:
    """Mean of the two directed mean distances, each over its own sample set."""
    return _chamfer(*_both(a, b, per_triangle, seed))


def surface_metrics(a: Mesh, b: Mesh, per_triangle: int = 4, seed: int = 0) -> dict:
    dab, dba = _both(a, b, per_triangle, seed)
    return {"hausdorff_mm": _hausdorff(dab, dba), "chamfer_mm": _chamfer(dab, dba)}
