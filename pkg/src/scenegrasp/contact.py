"""Contact annotation, precision/recall/F1 scoring, and report aggregation.

Contact is vertex-set based: a body vertex is in contact with the object
when its distance to the object surface is under the threshold (strictly;
2 cm by default), and vertices inside the object count as contact
regardless of depth. Foot/lower-leg vertices are in floor contact when
|z| is under the threshold.

Empty-set conventions for precision/recall: if the prediction is empty,
P=R=F1 are 1 when the truth is also empty (nothing to find) and 0
otherwise; mirrored for empty truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .body import BodyError, BodyFrame
from .geometry import MeshDistanceField, TriMesh
from .voxel import (
    VoxelGrid,
    floor_penetration,
    object_penetration,
    scene_penetration,
)

CONTACT_THRESHOLD = 0.02  # meters


class ContactError(ValueError):
    pass


@dataclass(frozen=True)
class ContactSet:
    target: str  # "object" | "floor"
    ids: frozenset[int]

    def __post_init__(self):
        if self.target not in ("object", "floor"):
            raise ContactError(f"unknown contact target {self.target!r}")
        object.__setattr__(self, "ids", frozenset(int(i) for i in self.ids))

    def __len__(self) -> int:
        return len(self.ids)


def annotate_contacts(
    body: BodyFrame,
    obj: TriMesh | MeshDistanceField,
    threshold: float = CONTACT_THRESHOLD,
) -> ContactSet:
    """Body vertices within ``threshold`` of the object surface (or inside it)."""
    if threshold <= 0:
        raise ContactError("threshold must be positive")
    if body.num_vertices == 0:
        raise BodyError("empty body")
    fld = obj if isinstance(obj, MeshDistanceField) else MeshDistanceField(obj)
    dists = fld.distance_many(body.vertices)
    near = dists < threshold
    if fld.watertight:
        # interior vertices are in contact no matter how deep; only points
        # inside the object's box can be interior
        box = fld.mesh.aabb()
        candidates = np.flatnonzero(~near & box.contains(body.vertices))
        for i in candidates:
            if fld.contains(body.vertices[i]):
                near[i] = True
    return ContactSet("object", frozenset(np.flatnonzero(near).tolist()))


def floor_contacts(body: BodyFrame, threshold: float = CONTACT_THRESHOLD) -> ContactSet:
    """Foot and lower-leg vertices within ``threshold`` of the z=0 plane."""
    ids = body.part_ids("foot", "lower_leg")
    if len(ids) == 0:
        raise BodyError("body has no foot or lower-leg vertices")
    z = body.vertices[ids, 2]
    hit = ids[np.abs(z) < threshold]
    return ContactSet("floor", frozenset(hit.tolist()))


def prf1(predicted: ContactSet, truth: ContactSet) -> tuple[float, float, float]:
    """Precision, recall, and F1 of a predicted contact set against truth."""
    if predicted.target != truth.target:
        raise ContactError(
            f"contact target mismatch: {predicted.target!r} vs {truth.target!r}"
        )
    if not predicted.ids and not truth.ids:
        return 1.0, 1.0, 1.0
    inter = len(predicted.ids & truth.ids)
    p = inter / len(predicted.ids) if predicted.ids else 0.0
    r = inter / len(truth.ids) if truth.ids else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


@dataclass(frozen=True)
class MetricsReport:
    """One frame's penetration and contact metrics."""

    sample_id: str
    scene_pen: float
    floor_pen: float
    object_pen_sdf: float
    object_pen_negative: int
    object_contact: tuple[float, float, float]
    floor_contact: tuple[float, float, float]

    def __post_init__(self):
        for name in ("scene_pen", "floor_pen"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContactError(f"{name}={v} outside [0, 1]")

    FIELDS = (
        "scene_pen",
        "object_pen_sdf",
        "floor_pen",
        "object_precision",
        "object_recall",
        "object_f1",
        "floor_precision",
        "floor_recall",
        "floor_f1",
    )

    def values(self) -> dict[str, float]:
        return {
            "scene_pen": self.scene_pen,
            "object_pen_sdf": self.object_pen_sdf,
            "floor_pen": self.floor_pen,
            "object_precision": self.object_contact[0],
            "object_recall": self.object_contact[1],
            "object_f1": self.object_contact[2],
            "floor_precision": self.floor_contact[0],
            "floor_recall": self.floor_contact[1],
            "floor_f1": self.floor_contact[2],
        }

    def to_json_dict(self) -> dict:
        out = {"sample_id": self.sample_id, "object_pen_negative": self.object_pen_negative}
        out.update(self.values())
        return out


def evaluate_frame(
    body: BodyFrame,
    grid: VoxelGrid,
    obj: TriMesh | MeshDistanceField,
    gt_object: ContactSet,
    gt_floor: ContactSet,
    sample_id: str = "",
    threshold: float = CONTACT_THRESHOLD,
) -> MetricsReport:
    """All four metrics for one frame against pre-loaded scene assets."""
    fld = obj if isinstance(obj, MeshDistanceField) else MeshDistanceField(obj)
    opn = object_penetration(body, fld)
    return MetricsReport(
        sample_id=sample_id,
        scene_pen=scene_penetration(body, grid),
        floor_pen=floor_penetration(body),
        object_pen_sdf=opn.mean_sdf,
        object_pen_negative=opn.negative_count,
        object_contact=prf1(annotate_contacts(body, fld, threshold), gt_object),
        floor_contact=prf1(floor_contacts(body, threshold), gt_floor),
    )


@dataclass(frozen=True)
class AggregateRow:
    method: str
    means: dict[str, float]
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ContactError("aggregate needs at least one report")


def aggregate(reports: list[MetricsReport], method: str) -> AggregateRow:
    """Arithmetic (macro) means of every metric over a report list."""
    if not reports:
        raise ContactError("no successful reports to aggregate")
    sums = dict.fromkeys(MetricsReport.FIELDS, 0.0)
    for rep in reports:
        for k, v in rep.values().items():
            sums[k] += v
    n = len(reports)
    return AggregateRow(method, {k: v / n for k, v in sums.items()}, n)


_COLUMNS = MetricsReport.FIELDS
_GROUPS = (("Penetration", 3), ("Object Contact", 3), ("Floor Contact", 3))
_SHORT = ("Scene", "Object", "Floor", "Precision", "Recall", "F1", "Precision", "Recall", "F1")


def render_csv(rows: list[AggregateRow]) -> str:
    lines = ["method," + ",".join(_COLUMNS) + ",count"]
    for row in rows:
        vals = ",".join(f"{row.means[c]:.6f}" for c in _COLUMNS)
        lines.append(f"{row.method},{vals},{row.count}")
    return "\n".join(lines) + "\n"


def render_table(rows: list[AggregateRow]) -> str:
    """Aligned text table grouped as Penetration / Object Contact / Floor Contact.

    Penetration ratios are shown as percentages; the object SDF column is
    meters.
    """
    width = 11
    name_w = max([len(r.method) for r in rows] + [8])
    group_line = " " * name_w
    for label, span in _GROUPS:
        group_line += " | " + label.center(width * span + (span - 1))
    head_line = "Method".ljust(name_w)
    for i, col in enumerate(_SHORT):
        sep = " | " if i % 3 == 0 else " "
        head_line += sep + col.rjust(width)
    out = [group_line, head_line, "-" * len(head_line)]
    for row in rows:
        line = row.method.ljust(name_w)
        for i, col in enumerate(_COLUMNS):
            sep = " | " if i % 3 == 0 else " "
            v = row.means[col]
            if col in ("scene_pen", "floor_pen"):
                cell = f"{100 * v:.2f}%"
            elif col == "object_pen_sdf":
                cell = f"{v:+.4f}m"
            else:
                cell = f"{v:.2f}"
            line += sep + cell.rjust(width)
        out.append(line)
    return "\n".join(out) + "\n"
