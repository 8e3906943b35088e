"""Core mesh and transform types.

Coordinate convention used throughout the toolkit: z-up, floor at z=0,
all lengths in meters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9


class MeshError(ValueError):
    """Raised when mesh data violates a structural invariant."""


def _as_points(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise MeshError(f"{name} must have shape (n, 3), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box given by min/max corners."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise MeshError(f"Aabb min {lo} exceeds max {hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def of_points(cls, points) -> "Aabb":
        pts = _as_points(points, "points")
        if len(pts) == 0:
            raise MeshError("cannot build Aabb from empty point set")
        return cls(pts.min(axis=0), pts.max(axis=0))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def size(self) -> np.ndarray:
        return self.hi - self.lo

    def volume(self) -> float:
        return float(np.prod(self.size))

    def padded(self, pad: float) -> "Aabb":
        return Aabb(self.lo - pad, self.hi + pad)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def overlaps_xy(self, other: "Aabb") -> bool:
        return bool(
            self.lo[0] <= other.hi[0]
            and self.hi[0] >= other.lo[0]
            and self.lo[1] <= other.hi[1]
            and self.hi[1] >= other.lo[1]
        )

    def intersection(self, other: "Aabb") -> "Aabb":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(lo > hi):
            raise MeshError("boxes do not intersect")
        return Aabb(lo, hi)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation; rotation must be proper orthonormal."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        tr = np.asarray(self.translation, dtype=np.float64).reshape(3)
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > ORTHO_TOL:
            raise MeshError(f"rotation is not orthonormal (max deviation {err:.3e})")
        det = np.linalg.det(rot)
        if abs(det - 1.0) > ORTHO_TOL:
            raise MeshError(f"rotation determinant {det} != +1")
        rot.flags.writeable = False
        tr.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> "RigidTransform":
        return cls(np.eye(3), np.asarray(t, dtype=np.float64))

    @classmethod
    def from_yaw(cls, angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(rot, np.asarray(translation, dtype=np.float64))

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        out = np.atleast_2d(pts) @ self.rotation.T + self.translation
        return out[0] if single else out

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying ``inner`` first, then self."""
        return RigidTransform(
            self.rotation @ inner.rotation,
            self.rotation @ inner.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rot_t = self.rotation.T
        return RigidTransform(rot_t, -(rot_t @ self.translation))


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True)
class TriMesh:
    """Triangle surface with optional per-face integer semantic labels.

    Invariants checked at construction: face indices in range, faces
    non-degenerate (three distinct vertex ids), label array (when present)
    one entry per face.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_labels: np.ndarray | None = field(default=None)

    def __post_init__(self):
        verts = _as_points(self.vertices, "vertices")
        faces = np.asarray(self.faces, dtype=np.int64)
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must have shape (m, 3), got {faces.shape}")
        if not np.all(np.isfinite(verts)):
            raise MeshError("vertices contain non-finite values")
        if faces.size:
            if faces.min() < 0 or faces.max() >= len(verts):
                bad_rows = np.any((faces < 0) | (faces >= len(verts)), axis=1)
                raise MeshError(
                    f"face {int(np.argmax(bad_rows))} references vertex outside "
                    f"0..{len(verts) - 1}"
                )
            degen = (
                (faces[:, 0] == faces[:, 1])
                | (faces[:, 1] == faces[:, 2])
                | (faces[:, 0] == faces[:, 2])
            )
            if degen.any():
                raise MeshError(f"degenerate face at index {int(np.argmax(degen))}")
        labels = self.face_labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64).reshape(-1)
            if len(labels) != len(faces):
                raise MeshError(
                    f"face_labels length {len(labels)} != face count {len(faces)}"
                )
            labels.flags.writeable = False
        verts.flags.writeable = False
        faces.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "face_labels", labels)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def aabb(self) -> Aabb:
        return Aabb.of_points(self.vertices)

    def triangles(self) -> np.ndarray:
        """Vertex coordinates per face, shape (m, 3, 3)."""
        return self.vertices[self.faces]

    def face_normals(self) -> np.ndarray:
        """Unit normals per face (zero vector for zero-area faces)."""
        tri = self.triangles()
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)

    def faces_with_label(self, label: int) -> np.ndarray:
        if self.face_labels is None:
            raise MeshError("mesh carries no face labels")
        return np.flatnonzero(self.face_labels == label)

    def vertices_with_label(self, label: int) -> np.ndarray:
        """Sorted ids of vertices incident to at least one face of ``label``."""
        fids = self.faces_with_label(label)
        return np.unique(self.faces[fids])

    def submesh(self, face_ids) -> "TriMesh":
        """Mesh restricted to the given faces; drops unreferenced vertices."""
        face_ids = np.asarray(face_ids, dtype=np.int64)
        faces = self.faces[face_ids]
        used, inverse = np.unique(faces, return_inverse=True)
        new_faces = inverse.reshape(faces.shape)
        labels = None if self.face_labels is None else self.face_labels[face_ids]
        return TriMesh(self.vertices[used], new_faces, labels)

    def without_label(self, label: int) -> "TriMesh":
        if self.face_labels is None:
            return self
        keep = np.flatnonzero(self.face_labels != label)
        return self.submesh(keep)

    def with_vertices(self, vertices) -> "TriMesh":
        return TriMesh(vertices, self.faces, self.face_labels)


def apply_transform(mesh: TriMesh, t: RigidTransform) -> TriMesh:
    """Rigidly move a mesh; faces and labels are carried unchanged."""
    return mesh.with_vertices(t.apply(mesh.vertices))


def merge_meshes(meshes: list[TriMesh]) -> TriMesh:
    """Concatenate meshes into one, preserving per-mesh labels when all have them."""
    if not meshes:
        raise MeshError("nothing to merge")
    verts, faces, labels = [], [], []
    offset = 0
    all_labeled = all(m.face_labels is not None for m in meshes)
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        if all_labeled:
            labels.append(m.face_labels)
        offset += m.num_vertices
    return TriMesh(
        np.vstack(verts),
        np.vstack(faces),
        np.concatenate(labels) if all_labeled else None,
    )
