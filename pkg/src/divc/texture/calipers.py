"""Convex hull and minimum-area enclosing rectangle by rotating calipers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Rect:
    angle: float          # radians; the rectangle's first axis is (cos, sin)
    width: float          # extent along the first axis
    height: float         # extent along the second axis
    origin: tuple         # (min along axis 1, min along axis 2) in the rotated frame

    @property
    def area(self) -> float:
        return self.width * self.height

    def axes(self) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        return np.array([[c, s], [-s, c]])

    def to_local(self, points) -> np.ndarray:
        """Coordinates inside the rectangle, in ``[0, width] x [0, height]``."""
        return np.asarray(points, dtype=np.float64) @ self.axes().T - np.asarray(self.origin)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull without collinear points (Andrew's monotone chain)."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.float64).reshape(-1, 2).tolist())))
    if len(pts) <= 2:
        return np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1], dtype=np.float64)


def _rect_for_edge(hull, i, lo, hi) -> Rect:
    e = hull[(i + 1) % len(hull)] - hull[i]
    ang = float(np.arctan2(e[1], e[0]))
    return Rect(ang, float(hi[0] - lo[0]), float(hi[1] - lo[1]), (float(lo[0]), float(lo[1])))


def min_area_rect(points) -> Rect:
    """Smallest rectangle enclosing ``points``; one side lies on a hull edge.

    Four calipers (min/max along the edge direction and its normal) advance
    monotonically around the hull as the edge index increases.
    """
    hull = convex_hull(points)
    n = len(hull)
    if n == 0:
        raise ValueError("need at least one point")
    if n == 1:
        return Rect(0.0, 0.0, 0.0, (float(hull[0, 0]), float(hull[0, 1])))
    if n == 2:
        d = hull[1] - hull[0]
        ang = float(np.arctan2(d[1], d[0]))
        c, s = np.cos(ang), np.sin(ang)
        proj = hull @ np.array([[c, -s], [s, c]])
        lo, hi = proj.min(axis=0), proj.max(axis=0)
        return Rect(ang, float(hi[0] - lo[0]), 0.0, (float(lo[0]), float(lo[1])))

    def proj(k, d):
        return hull[k % n] @ d

    best = None
    # caliper indices: far along edge (right), far along normal (top), back along edge (left)
    right = top = left = None
    for i in range(n):
        e = hull[(i + 1) % n] - hull[i]
        u = e / np.hypot(e[0], e[1])
        v = np.array([-u[1], u[0]])  # inward normal for a counter-clockwise hull
        if right is None:
            right = int(np.argmax(hull @ u))
            top = int(np.argmax(hull @ v))
            left = int(np.argmin(hull @ u))
        else:
            while proj(right + 1, u) > proj(right, u):
                right += 1
            while proj(top + 1, v) > proj(top, v):
                top += 1
            while proj(left + 1, u) < proj(left, u):
                left += 1
        base = hull[i] @ v
        lo = np.array([proj(left, u), base])
        hi = np.array([proj(right, u), proj(top, v)])
        area = (hi[0] - lo[0]) * (hi[1] - lo[1])
        if best is None or area < best[0]:
            best = (area, i, lo, hi)
    _, i, lo, hi = best
    return _rect_for_edge(hull, i, lo, hi)


def min_area_rect_bruteforce(points) -> Rect:
    """Reference: try every hull edge direction against every point."""
    hull = convex_hull(points)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(hull) < 3:
        return min_area_rect(points)
    best = None
    for i in range(len(hull)):
        e = hull[(i + 1) % len(hull)] - hull[i]
        u = e / np.hypot(e[0], e[1])
        v = np.array([-u[1], u[0]])
        a, b = pts @ u, pts @ v
        lo, hi = np.array([a.min(), b.min()]), np.array([a.max(), b.max()])
        area = (hi[0] - lo[0]) * (hi[1] - lo[1])
        if best is None or area < best[0]:
            best = (area, i, lo, hi)
    _, i, lo, hi = best
    return _rect_for_edge(hull, i, lo, hi)
