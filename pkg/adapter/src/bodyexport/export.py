"""Frame export: sequences in, per-frame OBJ + part map + index JSON out.

The outputs use the grasp toolkit's external formats: plain OBJ meshes and
a part-map JSON (``{"num_vertices": V, "parts": {name: [ids]}}``). Vertex
ordering is the model's template ordering in every frame, so one part map
serves the whole sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import BodyModel, ModelError, load_model

PART_NAMES = ("hand_R", "hand_L", "foot", "lower_leg", "pelvis", "other")


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class Sequence:
    """Axis-angle pose track plus per-frame global translation."""

    poses: np.ndarray  # (T, J, 3)
    trans: np.ndarray  # (T, 3)

    def __post_init__(self):
        p = np.asarray(self.poses, dtype=np.float64)
        t = np.asarray(self.trans, dtype=np.float64)
        if p.ndim != 3 or p.shape[2] != 3:
            raise ExportError(f"poses must be (T, J, 3), got {p.shape}")
        if t.shape != (len(p), 3):
            raise ExportError(f"trans must be (T, 3), got {t.shape}")
        p.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "poses", p)
        object.__setattr__(self, "trans", t)

    def __len__(self) -> int:
        return len(self.poses)


def load_sequence(path) -> Sequence:
    try:
        blob = np.load(path)
    except OSError as exc:
        raise ExportError(f"cannot open sequence {path}: {exc}") from exc
    try:
        return Sequence(blob["poses"], blob["trans"])
    except KeyError as exc:
        raise ExportError(f"sequence {path} is missing array {exc}") from exc


def load_part_table(path, num_vertices: int) -> dict:
    """Versioned part-segmentation table; must cover the model's vertices."""
    with open(path, "r", encoding="utf-8") as fh:
        table = json.load(fh)
    declared = table.get("num_vertices")
    if declared != num_vertices:
        raise ExportError(
            f"part table covers {declared} vertices, model has {num_vertices}"
        )
    parts = table.get("parts", {})
    seen = np.zeros(num_vertices, dtype=bool)
    for name, ids in parts.items():
        if name not in PART_NAMES:
            raise ExportError(f"unknown part {name!r}")
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= num_vertices):
            raise ExportError(f"part {name!r} has out-of-range vertex ids")
        if seen[ids].any():
            raise ExportError(f"part {name!r} overlaps another part")
        seen[ids] = True
    return table


@dataclass(frozen=True)
class ExportSpec:
    sequence: Path
    model: Path
    output_dir: Path
    part_table: Path
    frames: list[int] | None = None  # None selects every frame

    @classmethod
    def load(cls, path) -> "ExportSpec":
        base = Path(path).parent
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        frames = data.get("frames", "all")
        return cls(
            sequence=base / data["sequence"],
            model=base / data["model"],
            output_dir=base / data["output_dir"],
            part_table=base / data["part_table"],
            frames=None if frames == "all" else [int(i) for i in frames],
        )


def _write_obj(path, vertices: np.ndarray, faces: np.ndarray) -> None:
    lines = [f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}" for v in vertices]
    lines += [f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}" for f in faces]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def export_frames(spec: ExportSpec, faces: np.ndarray | None = None) -> dict:
    """Export the selected frames; returns (and writes) the index JSON.

    One OBJ per frame at the model's full vertex count, a part-map JSON in
    the toolkit schema, and ``index.json`` listing frame files and posed
    pelvis positions. ``faces`` supplies the mesh topology when the model
    asset alone is used with an external triangulation; by default a
    template-order triangle fan keeps the files valid meshes.
    """
    model = load_model(spec.model)
    seq = load_sequence(spec.sequence)
    if seq.poses.shape[1] != model.num_joints:
        raise ExportError(
            f"sequence has {seq.poses.shape[1]} joints, model has {model.num_joints}"
        )
    table = load_part_table(spec.part_table, model.num_vertices)

    selection = list(range(len(seq))) if spec.frames is None else list(spec.frames)
    for i in selection:
        if not 0 <= i < len(seq):
            raise ExportError(f"frame {i} outside sequence of length {len(seq)}")

    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if faces is None:
        ids = np.arange(model.num_vertices - model.num_vertices % 3)
        faces = ids.reshape(-1, 3)

    part_map_path = out / "partmap.json"
    with open(part_map_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "num_vertices": model.num_vertices,
                "parts": {k: sorted(int(i) for i in v) for k, v in sorted(table["parts"].items())},
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")

    rows = []
    for i in selection:
        verts, pelvis = model.pose(seq.poses[i], seq.trans[i])
        name = f"frame_{i:04d}.obj"
        _write_obj(out / name, verts, faces)
        rows.append({"frame": i, "mesh": name, "pelvis": [float(x) for x in pelvis]})

    index = {
        "num_vertices": model.num_vertices,
        "part_map": "partmap.json",
        "frames": rows,
    }
    with open(out / "index.json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return index
