"""Deterministic block-level texture parametrisation and atlas output."""

from .atlas import Atlas, Chart, TriangleGroup, atlas_for_volume, build_atlas, group_triangles, recompute_uvs_receiver
from .calipers import convex_hull, min_area_rect
from .morton import assign_chart_slots, morton2, morton2_inv, morton3, morton3_inv
from .packing import pack_rects
from .raster import color_field, rasterize_atlas, write_image

__all__ = [
    "Atlas", "Chart", "TriangleGroup", "atlas_for_volume", "build_atlas", "group_triangles",
    "recompute_uvs_receiver", "convex_hull", "min_area_rect", "assign_chart_slots", "morton2",
    "morton2_inv", "morton3", "morton3_inv", "pack_rects", "color_field", "rasterize_atlas", "write_image",
]
