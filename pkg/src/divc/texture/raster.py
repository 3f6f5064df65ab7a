"""Atlas rasterisation with procedural colour fields, and image output."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..surface.marching import Mesh
from .atlas import Atlas


# colour fields map (N, 3) positions in mm to (N, 3) RGB in [0, 1]

def constant_field(rgb=(0.8, 0.5, 0.2)):
    rgb = np.asarray(rgb, dtype=np.float64)
    return lambda p: np.broadcast_to(rgb, (len(p), 3)).copy()


def checker_field(cell_mm: float = 10.0, a=(0.9, 0.9, 0.9), b=(0.15, 0.2, 0.6)):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)

    def field(p):
        parity = np.floor(np.asarray(p) / cell_mm).astype(np.int64).sum(axis=1) % 2
        return np.where(parity[:, None] == 0, a, b)

    return field


def gradient_field(lo, hi):
    lo, hi = np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)
    span = np.where(hi > lo, hi - lo, 1.0)
    return lambda p: np.clip((np.asarray(p) - lo) / span, 0.0, 1.0)


COLOR_FIELDS = ("constant", "checker", "gradient")


def color_field(name: str, extent_mm=None):
    """Named field; ``extent_mm`` (lo, hi) scales the gradient."""
    if name == "constant":
        return constant_field()
    if name == "checker":
        return checker_field()
    if name == "gradient":
        lo, hi = extent_mm if extent_mm is not None else ((0, 0, 0), (320, 320, 320))
        return gradient_field(lo, hi)
    raise ValueError(f"unknown colour field {name!r}; choose from {', '.join(COLOR_FIELDS)}")


def to_uint8(rgb) -> np.ndarray:
    return np.clip(np.rint(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)


_NEIGHBOURS = ((0, -1), (0, 1), (-1, 0), (1, 0), (-1, -1), (1, -1), (-1, 1), (1, 1))


def rasterize_atlas(mesh: Mesh, atlas: Atlas, field, dilate: int = 1):
    """Returns ``(image uint8 (R, R, 3), coverage bool (R, R))``.

    A texel belongs to the first triangle (in mesh order) whose UV footprint
    contains its centre; it stores the field colour at the matching surface
    point. Texels holding a triangle corner but no centre hit get the corner
    colour, then uncovered texels next to covered ones copy a neighbour
    (fixed neighbour order) ``dilate`` times.
    """
    R = atlas.resolution
    img = np.zeros((R, R, 3), dtype=np.float64)
    owner = np.full((R, R), -1, dtype=np.int64)
    uv = atlas.corner_uv
    pos = mesh.vertices[mesh.triangles]
    for t in range(mesh.n_triangles):
        q = uv[t]
        x0, y0 = np.floor(q.min(axis=0)).astype(int)
        x1, y1 = np.ceil(q.max(axis=0)).astype(int)
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, R), min(y1, R)
        if x1 <= x0 or y1 <= y0:
            continue
        xs, ys = np.meshgrid(np.arange(x0, x1) + 0.5, np.arange(y0, y1) + 0.5)
        d1, d2 = q[1] - q[0], q[2] - q[0]
        det = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(det) < 1e-12:
            continue
        rx, ry = xs - q[0, 0], ys - q[0, 1]
        b1 = (rx * d2[1] - ry * d2[0]) / det
        b2 = (d1[0] * ry - d1[1] * rx) / det
        b0 = 1.0 - b1 - b2
        inside = (b0 >= -1e-9) & (b1 >= -1e-9) & (b2 >= -1e-9)
        iy, ix = np.nonzero(inside)
        iy, ix = iy + y0, ix + x0
        free = owner[iy, ix] < 0
        iy, ix = iy[free], ix[free]
        if len(iy) == 0:
            continue
        w = np.stack([b0, b1, b2], axis=-1)[inside][free]
        img[iy, ix] = field(w @ pos[t])
        owner[iy, ix] = t
    # corners that landed in uncovered texels
    cx = np.clip(np.floor(uv[..., 0]).astype(int), 0, R - 1).reshape(-1)
    cy = np.clip(np.floor(uv[..., 1]).astype(int), 0, R - 1).reshape(-1)
    cpos = pos.reshape(-1, 3)
    for i in range(len(cx)):
        if owner[cy[i], cx[i]] < 0:
            img[cy[i], cx[i]] = field(cpos[i:i + 1])[0]
            owner[cy[i], cx[i]] = i // 3
    covered = owner >= 0
    out = to_uint8(img)
    for _ in range(dilate):
        grown = covered.copy()
        for dx, dy in _NEIGHBOURS:
            src = np.zeros_like(covered)
            shifted = np.zeros_like(out)
            ys = slice(max(dy, 0), R + min(dy, 0))
            yd = slice(max(-dy, 0), R + min(-dy, 0))
            xs = slice(max(dx, 0), R + min(dx, 0))
            xd = slice(max(-dx, 0), R + min(-dx, 0))
            src[yd, xd] = covered[ys, xs]
            shifted[yd, xd] = out[ys, xs]
            take = src & ~grown
            out[take] = shifted[take]
            grown |= take
        covered = grown
    return out, owner >= 0


def sample_atlas(image: np.ndarray, uv_px) -> np.ndarray:
    """Nearest-texel lookup at pixel coordinates ``(N, 2)``; returns uint8 RGB."""
    uv = np.asarray(uv_px, dtype=np.float64).reshape(-1, 2)
    R = image.shape[0]
    x = np.clip(np.floor(uv[:, 0]).astype(int), 0, R - 1)
    y = np.clip(np.floor(uv[:, 1]).astype(int), 0, R - 1)
    return image[y, x]


def write_ppm(path, image: np.ndarray) -> None:
    h, w, _ = image.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)


def write_image(path, image: np.ndarray) -> None:
    """PNG (via Pillow) or binary PPM, chosen by extension."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        write_ppm(path, image)
        return
    from PIL import Image

    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8), "RGB").save(path, format="PNG", optimize=False)
