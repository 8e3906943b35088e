"""Mesh representation, I/O, spatial indexing, and distance queries."""

from .mesh import (
    Aabb,
    MeshError,
    RigidTransform,
    TriMesh,
    apply_transform,
    merge_meshes,
    rot_x,
    rot_y,
)
from .meshio import (
    UNLABELED,
    MeshFormatError,
    load_label_table,
    load_mesh,
    write_label_table,
    write_mesh,
)
from .sdf import (
    MeshDistanceField,
    NotWatertightWarning,
    is_watertight,
    point_triangle_distances,
    points_to_surface_distance,
    signed_distance,
)
from .spatial import SpatialIndex, nearest_vertex

__all__ = [
    "Aabb",
    "MeshError",
    "MeshFormatError",
    "MeshDistanceField",
    "NotWatertightWarning",
    "RigidTransform",
    "SpatialIndex",
    "TriMesh",
    "UNLABELED",
    "apply_transform",
    "is_watertight",
    "load_label_table",
    "load_mesh",
    "merge_meshes",
    "nearest_vertex",
    "point_triangle_distances",
    "points_to_surface_distance",
    "rot_x",
    "rot_y",
    "signed_distance",
    "write_label_table",
    "write_mesh",
]
