"""Quadtree packing of axis-aligned rectangles into a square chart."""

from __future__ import annotations

from dataclasses import dataclass, field

GUTTER = 1


class PackingError(ValueError):
    pass


@dataclass
class _Node:
    x: int
    y: int
    size: int
    full: bool = False
    children: list = field(default_factory=list)

    def insert(self, w: int, h: int):
        """Place a ``w x h`` box (gutter included); returns its corner or None."""
        if self.full or w > self.size or h > self.size:
            return None
        half = self.size // 2
        if w <= half and h <= half and half >= 1:
            if not self.children:
                self.children = [_Node(self.x + dx * half, self.y + dy * half, half)
                                 for dy in (0, 1) for dx in (0, 1)]
            for child in self.children:
                spot = child.insert(w, h)
                if spot is not None:
                    return spot
            return None
        if self.children:
            return None
        self.full = True
        return self.x, self.y


def pack_rects(sizes, chart_size: int, gutter: int = GUTTER):
    """Pack integer ``(w, h)`` rectangles, largest first.

    Each rectangle is padded by ``gutter`` pixels on every side before
    insertion, so neighbours are at least one gutter apart and nothing touches
    the chart border. Returns the top-left corner of every rectangle (input
    order), or ``None`` when they do not fit.
    """
    root = _Node(0, 0, chart_size)
    order = sorted(range(len(sizes)), key=lambda i: (-max(sizes[i]), -sizes[i][0] * sizes[i][1], i))
    out = [None] * len(sizes)
    for i in order:
        w, h = sizes[i]
        spot = root.insert(int(w) + 2 * gutter, int(h) + 2 * gutter)
        if spot is None:
            return None
        out[i] = (spot[0] + gutter, spot[1] + gutter)
    return out
