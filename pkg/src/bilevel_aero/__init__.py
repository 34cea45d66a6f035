"""Bi-level Landweber inversion with iterative mesh refinement for a 2D Helmholtz source problem."""

from .geometry import BoundaryTag, GeometryError, GeometrySpec, Rect, Region
from .mesh import Field, Mesh, MeshError, generate_mesh, mesh_size, refine, refine_uniformly, transfer

__all__ = [
    "BoundaryTag", "GeometryError", "GeometrySpec", "Rect", "Region",
    "Field", "Mesh", "MeshError", "generate_mesh", "mesh_size", "refine", "refine_uniformly", "transfer",
]
