"""Mesh extraction, topology and error-bound checks, surface distance metrics."""

from .marching import (
    Mesh,
    SurfaceError,
    cell_configs,
    error_bound_check,
    marching_cubes,
    mesh_from_volume,
    topology_equal,
    write_obj,
)
from .metrics import TriangleBVH, chamfer, hausdorff, point_to_mesh_distance, sample_surface, surface_metrics

__all__ = [
    "Mesh", "SurfaceError", "cell_configs", "error_bound_check", "marching_cubes", "mesh_from_volume",
    "topology_equal", "write_obj", "TriangleBVH", "chamfer", "hausdorff", "point_to_mesh_distance",
    "sample_surface", "surface_metrics",
]
