"""Mesh data structures and geometric queries."""

from .bvh import (MeshBvh, Ray, closest_point, get_bvh, intersect_meshes,
                  raycast, signed_distances)
from .mesh import (RigidTransform, TriangleMesh, box_mesh, grid_mesh,
                   icosphere, min_enclosing_sphere, weld_vertices)
from .meshio import load_mesh, save_mesh
from .sampling import (Source, SurfaceSample, SurfaceSamples,
                       poisson_disc_sample, random_surface_points,
                       sample_surface_evenly)
from .sdf import SdfGrid, compute_sdf, load_sdf, save_sdf

__all__ = [
    "MeshBvh", "Ray", "RigidTransform", "SdfGrid", "Source", "SurfaceSample",
    "SurfaceSamples", "TriangleMesh", "box_mesh", "closest_point",
    "compute_sdf", "get_bvh", "grid_mesh", "icosphere", "intersect_meshes",
    "load_mesh", "load_sdf", "min_enclosing_sphere", "poisson_disc_sample",
    "random_surface_points", "raycast", "sample_surface_evenly", "save_mesh",
    "save_sdf", "signed_distances", "weld_vertices",
]
