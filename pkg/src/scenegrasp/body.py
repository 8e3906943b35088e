"""Body frames: a body mesh snapshot plus a vertex-to-part map and pelvis marker.

Part maps are stored as JSON ``{"num_vertices": N, "parts": {name: [ids]}}``;
vertices not listed under any part belong to "other".
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import TriMesh, load_mesh

PARTS = ("hand_R", "hand_L", "foot", "lower_leg", "pelvis", "other")
PART_CODE = {name: i for i, name in enumerate(PARTS)}
OTHER = PART_CODE["other"]


class BodyError(ValueError):
    pass


@dataclass(frozen=True)
class BodyFrame:
    """One evaluable time-step of a body."""

    vertices: np.ndarray
    part_of: np.ndarray  # per-vertex code into PARTS
    pelvis: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        part = np.asarray(self.part_of, dtype=np.int8).reshape(-1)
        pelvis = np.asarray(self.pelvis, dtype=np.float64).reshape(3)
        if len(verts) == 0:
            raise BodyError("body frame has no vertices")
        if len(part) != len(verts):
            raise BodyError(f"part map covers {len(part)} of {len(verts)} vertices")
        if part.min() < 0 or part.max() >= len(PARTS):
            raise BodyError("part map contains unknown part codes")
        for a in (verts, part, pelvis):
            a.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "part_of", part)
        object.__setattr__(self, "pelvis", pelvis)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def part_ids(self, *names: str) -> np.ndarray:
        codes = [PART_CODE[n] for n in names]
        return np.flatnonzero(np.isin(self.part_of, codes))

    @property
    def hand_ids(self) -> np.ndarray:
        return self.part_ids("hand_R", "hand_L")

    @property
    def foot_ids(self) -> np.ndarray:
        return self.part_ids("foot")

    def translated(self, offset) -> "BodyFrame":
        off = np.asarray(offset, dtype=np.float64).reshape(3)
        return BodyFrame(self.vertices + off, self.part_of, self.pelvis + off)


def part_map_from_parts(num_vertices: int, parts: dict[str, list[int]]) -> np.ndarray:
    """Expand a parts dict into a per-vertex code array (unlisted -> other)."""
    out = np.full(num_vertices, OTHER, dtype=np.int8)
    seen = np.zeros(num_vertices, dtype=bool)
    for name, ids in parts.items():
        if name not in PART_CODE:
            raise BodyError(f"unknown part name {name!r}")
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= num_vertices):
            raise BodyError(f"part {name!r} references vertex outside 0..{num_vertices - 1}")
        if seen[ids].any():
            raise BodyError(f"part {name!r} overlaps another part")
        seen[ids] = True
        out[ids] = PART_CODE[name]
    return out


def load_part_map(path, num_vertices: int) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    declared = data.get("num_vertices")
    if declared is not None and declared != num_vertices:
        raise BodyError(
            f"part map declares {declared} vertices, mesh has {num_vertices}"
        )
    return part_map_from_parts(num_vertices, data["parts"])


def write_part_map(path, num_vertices: int, parts: dict[str, list[int]]) -> None:
    part_map_from_parts(num_vertices, parts)  # validate before writing
    payload = {
        "num_vertices": num_vertices,
        "parts": {k: sorted(int(i) for i in v) for k, v in sorted(parts.items())},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_body_frame(mesh_path, part_map_path, pelvis) -> tuple[BodyFrame, TriMesh]:
    """Load a body frame from a mesh file and part-map JSON."""
    mesh = load_mesh(mesh_path)
    part_of = load_part_map(part_map_path, mesh.num_vertices)
    return BodyFrame(mesh.vertices, part_of, pelvis), mesh
