"""Trajectory alignment, graspable-object placement, and pelvis-target
augmentation.

Walk alignment searches an exhaustive discrete grid (yaw angles x an x-y
translation lattice anchored at the trajectory's final pelvis) for the
transform that ends the walk closest to the receptacle while keeping every
frame's body proxy out of the scene's occupied voxel columns. The body
proxy is a vertical capsule per frame: a frame collides when any occupied
voxel-column center lies within the capsule radius horizontally and below
the pelvis height.

Objects are placed on the highest reachable upward-facing receptacle vertex
and dropped so their lowest vertex touches the support surface.

Pelvis-target augmentation follows a four-step filter: uniform ball
sampling around the object (dropping points hovering over the receptacle
or at implausible heights), a band around the original pelvis height, a
standing-room cuboid collision test against occupied voxels, and a uniform
subsample of the survivors, each candidate facing the object center.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import (
    RigidTransform,
    SpatialIndex,
    TriMesh,
    apply_transform,
    is_watertight,
    points_to_surface_distance,
)
from .voxel import VoxelGrid, anchored_region, downward_fill, scene_penetration, voxelize
from .body import OTHER, BodyFrame


class SynthError(ValueError):
    pass


class NoAlignmentError(SynthError):
    """No collision-free, in-reach candidate exists on the search grid."""

    def __init__(self, message: str, best_violations: dict | None = None):
        super().__init__(message)
        self.best_violations = best_violations or {}


class PlacementError(SynthError):
    pass


@dataclass(frozen=True)
class Trajectory:
    """Per-frame pelvis path of a walking clip. Body proxies for collision
    checks are vertical capsules of ``capsule_radius``."""

    pelvis: np.ndarray  # (frames, 3)
    fps: float = 30.0
    capsule_radius: float = 0.18

    def __post_init__(self):
        p = np.asarray(self.pelvis, dtype=np.float64).reshape(-1, 3)
        if len(p) < 2:
            raise SynthError("trajectory needs at least 2 frames")
        if not np.all(np.isfinite(p)):
            raise SynthError("trajectory contains non-finite coordinates")
        if self.fps <= 0 or self.capsule_radius <= 0:
            raise SynthError("fps and capsule_radius must be positive")
        p.flags.writeable = False
        object.__setattr__(self, "pelvis", p)

    @property
    def num_frames(self) -> int:
        return len(self.pelvis)

    def to_json_dict(self) -> dict:
        return {
            "fps": self.fps,
            "capsule_radius": self.capsule_radius,
            "pelvis": [[float(c) for c in row] for row in self.pelvis],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Trajectory":
        return cls(
            np.array(d["pelvis"], dtype=np.float64),
            fps=float(d.get("fps", 30.0)),
            capsule_radius=float(d.get("capsule_radius", 0.18)),
        )

    @classmethod
    def load(cls, path) -> "Trajectory":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class AlignConfig:
    yaw_steps: int = 64
    lattice_step: float = 0.25
    reach_max: float = 0.8

    def __post_init__(self):
        if self.yaw_steps < 1 or self.lattice_step <= 0 or self.reach_max <= 0:
            raise SynthError("invalid alignment search config")


def _occupied_columns(grid: VoxelGrid) -> tuple[np.ndarray, float]:
    """XY centers of occupied columns reachable from the floor, plus the
    z of the lowest cell center at or above z=0.

    Requires a downward-filled grid, where occupancy per column is
    contiguous from the grid bottom; a single z threshold then serves every
    column.
    """
    if not grid.filled:
        raise SynthError("collision checks need a downward-filled grid")
    s = grid.voxel_size
    k0 = max(0, int(np.ceil(-grid.origin[2] / s - 0.5)))
    occ = grid.occupancy
    if k0 >= occ.shape[2]:
        return np.empty((0, 2)), float("inf")
    # columns still occupied at or above z=0
    cols = np.argwhere(occ[:, :, k0:].any(axis=2))
    centers = grid.origin[:2] + (cols + 0.5) * s
    z0 = float(grid.origin[2] + (k0 + 0.5) * s)
    return centers, z0


def align_walk(
    traj: Trajectory,
    scene: TriMesh,
    receptacle_label: int,
    cfg: AlignConfig,
    occupancy: VoxelGrid,
) -> RigidTransform:
    """Best collision-free yaw+translation for a walking trajectory.

    Returns the transform minimizing the final pelvis distance to the
    receptacle surface among feasible candidates; ties break on smaller
    translation, then smaller |yaw|. The lattice is anchored at the
    original final pelvis so the identity transform is always a candidate.
    """
    rec_faces = scene.faces_with_label(receptacle_label)
    if len(rec_faces) == 0:
        raise SynthError(f"scene has no faces labeled {receptacle_label} (receptacle)")
    rec_tri = scene.vertices[scene.faces[rec_faces]]

    col_centers, col_z0 = _occupied_columns(occupancy)
    from scipy.spatial import cKDTree

    col_tree = cKDTree(col_centers) if len(col_centers) else None
    pelvis_z_min = float(traj.pelvis[:, 2].min())
    if col_tree is not None and pelvis_z_min < col_z0:
        raise SynthError(
            f"pelvis height {pelvis_z_min:.3f} below the lowest occupied voxel "
            f"center {col_z0:.3f}; capsule proxy assumption does not hold"
        )

    p_final = traj.pelvis[-1]
    scene_box = scene.aabb()
    step = cfg.lattice_step
    di_lo = int(np.floor((scene_box.lo[0] - p_final[0]) / step))
    di_hi = int(np.ceil((scene_box.hi[0] - p_final[0]) / step))
    dj_lo = int(np.floor((scene_box.lo[1] - p_final[1]) / step))
    dj_hi = int(np.ceil((scene_box.hi[1] - p_final[1]) / step))
    offsets = np.array(
        [
            (i * step, j * step)
            for i in range(di_lo, di_hi + 1)
            for j in range(dj_lo, dj_hi + 1)
        ]
    )

    best_key = None
    best: RigidTransform | None = None
    best_bad_key = None
    best_bad: dict | None = None

    for k in range(cfg.yaw_steps):
        yaw = (2.0 * np.pi * k / cfg.yaw_steps + np.pi) % (2.0 * np.pi) - np.pi
        rot = RigidTransform.from_yaw(yaw)
        p_rot = traj.pelvis @ rot.rotation.T  # (F, 3)
        # translation puts the rotated final pelvis on each lattice point
        targets_xy = p_final[:2] + offsets
        t_xy = targets_xy - p_rot[-1, :2]  # (L, 2)

        finals = np.column_stack([targets_xy, np.full(len(t_xy), p_final[2])])
        reach = points_to_surface_distance(finals, rec_tri)
        reach_ok = reach <= cfg.reach_max

        # collision: every frame of a candidate must clear occupied columns;
        # only evaluated for candidates already within reach
        if col_tree is not None:
            colliding_counts = np.full(len(t_xy), -1, dtype=np.int64)
            idx = np.flatnonzero(reach_ok)
            if len(idx):
                frames_xy = p_rot[None, :, :2] + t_xy[idx, None, :]  # (l, F, 2)
                dist, _ = col_tree.query(frames_xy.reshape(-1, 2))
                hits = (dist <= traj.capsule_radius).reshape(len(idx), traj.num_frames)
                colliding_counts[idx] = hits.sum(axis=1)
        else:
            colliding_counts = np.zeros(len(t_xy), dtype=np.int64)

        for li in range(len(t_xy)):
            n_coll = int(colliding_counts[li]) if colliding_counts[li] >= 0 else None
            feasible = reach_ok[li] and (n_coll == 0)
            tnorm2 = float(t_xy[li] @ t_xy[li])
            if feasible:
                key = (float(reach[li]), tnorm2, abs(yaw), yaw, float(t_xy[li][0]), float(t_xy[li][1]))
                if best_key is None or key < best_key:
                    best_key = key
                    best = RigidTransform(
                        rot.rotation, np.array([t_xy[li][0], t_xy[li][1], 0.0])
                    )
            else:
                viol = max(0.0, float(reach[li]) - cfg.reach_max)
                nc = n_coll if n_coll is not None else -1
                bad_key = (nc if nc >= 0 else 10**9, viol, tnorm2, abs(yaw))
                if best_bad_key is None or bad_key < best_bad_key:
                    best_bad_key = bad_key
                    best_bad = {
                        "colliding_frames": nc,
                        "reach_violation": viol,
                        "yaw": float(yaw),
                        "offset": [float(t_xy[li][0]), float(t_xy[li][1])],
                    }

    if best is None:
        raise NoAlignmentError(
            "no collision-free candidate within reach of the receptacle",
            best_violations=best_bad,
        )
    return best


# -- object placement ----------------------------------------------------

@dataclass(frozen=True)
class PlaceConfig:
    reach_max: float = 0.8
    upward_normal_z: float = 0.8
    contact_eps: float = 1e-4

    def __post_init__(self):
        if self.reach_max <= 0 or not 0 < self.upward_normal_z < 1 or self.contact_eps <= 0:
            raise SynthError("invalid placement config")


@dataclass(frozen=True)
class PlacementResult:
    pose: RigidTransform
    support_point: np.ndarray
    receptacle_label: int

    def __post_init__(self):
        sp = np.asarray(self.support_point, dtype=np.float64).reshape(3)
        sp.flags.writeable = False
        object.__setattr__(self, "support_point", sp)

    def to_json_dict(self) -> dict:
        return {
            "rotation": [[float(x) for x in row] for row in self.pose.rotation],
            "translation": [float(x) for x in self.pose.translation],
            "support_point": [float(x) for x in self.support_point],
            "receptacle_label": self.receptacle_label,
        }


def place_object(
    scene: TriMesh,
    receptacle_label: int,
    end_position,
    obj: TriMesh,
    cfg: PlaceConfig | None = None,
) -> PlacementResult:
    """Place an object on the highest reachable point of the receptacle.

    The support point is the z-maximal receptacle vertex within
    ``reach_max`` of ``end_position`` whose local surface patch faces up
    (incident face normal z above the threshold). The object is translated
    so its bounding-box center sits over the support point and its lowest
    vertex touches the support height.
    """
    cfg = cfg or PlaceConfig()
    end = np.asarray(end_position, dtype=np.float64).reshape(3)
    if not is_watertight(obj):
        raise PlacementError("object mesh must be watertight")
    rec_faces = scene.faces_with_label(receptacle_label)
    if len(rec_faces) == 0:
        raise PlacementError(f"scene has no faces labeled {receptacle_label}")

    normals = scene.face_normals()
    upward_vertices = np.unique(
        scene.faces[rec_faces[normals[rec_faces][:, 2] > cfg.upward_normal_z]]
    )
    rec_vertices = np.unique(scene.faces[rec_faces])

    index = SpatialIndex(scene.vertices[rec_vertices])
    near_local = index.within_radius(end, cfg.reach_max)
    if len(near_local) == 0:
        raise PlacementError(
            f"no receptacle vertex within {cfg.reach_max} m of the end position"
        )
    near_global = rec_vertices[near_local]
    candidates = near_global[np.isin(near_global, upward_vertices)]
    if len(candidates) == 0:
        raise PlacementError("no reachable upward-facing receptacle point")

    zs = scene.vertices[candidates, 2]
    top = candidates[zs == zs.max()]
    support_id = int(top.min())  # deterministic tie-break
    support = scene.vertices[support_id]

    box = obj.aabb()
    translation = np.array(
        [
            support[0] - 0.5 * (box.lo[0] + box.hi[0]),
            support[1] - 0.5 * (box.lo[1] + box.hi[1]),
            support[2] - box.lo[2],
        ]
    )
    return PlacementResult(
        RigidTransform.from_translation(translation), support, receptacle_label
    )


def placement_support_gap(result: PlacementResult, obj: TriMesh) -> float:
    """Vertical gap between the placed object's lowest vertex and the support."""
    placed = apply_transform(obj, result.pose)
    return float(placed.vertices[:, 2].min() - result.support_point[2])


def placement_scene_penetration(
    scene: TriMesh,
    result: PlacementResult,
    obj: TriMesh,
    floor_label: int | None = None,
    voxel_size: float = 0.05,
    pad: float = 0.25,
) -> float:
    """Fraction of placed-object vertices inside occupied scene voxels.

    The check grid is anchored at the support plane so exact resting contact
    is representable; the floor plane is excluded from occupancy.
    """
    placed = apply_transform(obj, result.pose)
    region = anchored_region(
        placed.aabb().padded(pad), float(result.support_point[2]), voxel_size
    )
    solid = scene if floor_label is None else scene.without_label(floor_label)
    grid = downward_fill(voxelize(solid, region, voxel_size))
    body = BodyFrame(
        placed.vertices,
        np.full(placed.num_vertices, OTHER, dtype=np.int8),
        placed.aabb().center,
    )
    return scene_penetration(body, grid)


# -- pelvis-target augmentation -------------------------------------------

@dataclass(frozen=True)
class AugmentConfig:
    sample_count: int = 5000
    radius: float = 1.0
    height_band: float = 0.15
    cuboid_dims: tuple[float, float, float] = (0.6, 0.6, 1.8)  # x, y, height
    output_count: int = 10
    ground_band: tuple[float, float] = (0.6, 1.4)

    def __post_init__(self):
        ok = (
            self.sample_count > 0
            and self.radius > 0
            and self.height_band > 0
            and all(d > 0 for d in self.cuboid_dims)
            and 0 < self.output_count <= self.sample_count
            and 0 < self.ground_band[0] < self.ground_band[1]
        )
        if not ok:
            raise SynthError("invalid augmentation config")


@dataclass(frozen=True)
class PelvisCandidate:
    position: np.ndarray
    facing: np.ndarray  # unit vector toward the object center

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        fac = np.asarray(self.facing, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(fac) - 1.0) > 1e-9:
            raise SynthError("facing must be a unit vector")
        pos.flags.writeable = False
        fac.flags.writeable = False
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "facing", fac)

    def to_json_dict(self) -> dict:
        return {
            "position": [float(x) for x in self.position],
            "facing": [float(x) for x in self.facing],
        }


@dataclass(frozen=True)
class AugmentResult:
    candidates: tuple[PelvisCandidate, ...]
    counts: dict[str, int]  # survivors after each filter step
    seed: int


def box_clear_of_occupancy(grid: VoxelGrid, lo, hi) -> bool:
    """True when the closed box [lo, hi] has no positive-volume overlap with
    any occupied cell. Space outside the grid counts as free."""
    lo = np.asarray(lo, dtype=np.float64).reshape(3)
    hi = np.asarray(hi, dtype=np.float64).reshape(3)
    s = grid.voxel_size
    i_min = np.floor((lo - grid.origin) / s).astype(np.int64)
    i_max = np.ceil((hi - grid.origin) / s).astype(np.int64) - 1
    i_min = np.maximum(i_min, 0)
    i_max = np.minimum(i_max, np.array(grid.dims) - 1)
    if np.any(i_min > i_max):
        return True
    sub = grid.occupancy[
        i_min[0] : i_max[0] + 1, i_min[1] : i_max[1] + 1, i_min[2] : i_max[2] + 1
    ]
    return not bool(sub.any())


def _uniform_ball(rng: np.random.Generator, n: int, center: np.ndarray, radius: float) -> np.ndarray:
    dirs = rng.normal(size=(n, 3))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    dirs /= norms
    radii = radius * rng.random(n) ** (1.0 / 3.0)
    return center + dirs * radii[:, None]


def augment_pelvis(
    occupancy: VoxelGrid,
    placed_object: TriMesh,
    receptacle: TriMesh,
    original_pelvis,
    cfg: AugmentConfig,
    seed: int,
) -> AugmentResult:
    """Collision-free alternative pelvis targets around a placed object.

    Deterministic in ``seed``. Returns the surviving candidates (up to
    ``output_count``) plus survivor counts per filter step; an empty
    candidate list with the counts signals an infeasible placement
    neighborhood.
    """
    rng = np.random.default_rng(seed)
    original = np.asarray(original_pelvis, dtype=np.float64).reshape(3)
    center = placed_object.aabb().center
    rec_box = receptacle.aabb()

    pts = _uniform_ball(rng, cfg.sample_count, center, cfg.radius)

    # step 1: not hovering over the receptacle (x-y inside its footprint and
    # z above its top surface), and at a plausible standing height
    z = pts[:, 2]
    over_receptacle = (
        (pts[:, 0] >= rec_box.lo[0])
        & (pts[:, 0] <= rec_box.hi[0])
        & (pts[:, 1] >= rec_box.lo[1])
        & (pts[:, 1] <= rec_box.hi[1])
        & (z > rec_box.hi[2])
    )
    keep1 = ~over_receptacle & (z >= cfg.ground_band[0]) & (z <= cfg.ground_band[1])
    # degenerate guard: candidates coincident with the object center have no facing
    keep1 &= np.linalg.norm(pts - center, axis=1) > 1e-9
    pts1 = pts[keep1]

    # step 2: height band around the original pelvis
    keep2 = np.abs(pts1[:, 2] - original[2]) <= cfg.height_band
    pts2 = pts1[keep2]

    # step 3: standing-room cuboid free of occupied voxels
    hx, hy = cfg.cuboid_dims[0] / 2.0, cfg.cuboid_dims[1] / 2.0
    ch = cfg.cuboid_dims[2]
    keep3 = np.array(
        [
            box_clear_of_occupancy(
                occupancy,
                (p[0] - hx, p[1] - hy, 0.0),
                (p[0] + hx, p[1] + hy, ch),
            )
            for p in pts2
        ],
        dtype=bool,
    )
    pts3 = pts2[keep3]

    counts = {
        "sampled": cfg.sample_count,
        "after_overhang_and_ground": int(keep1.sum()),
        "after_height_band": int(keep2.sum()),
        "after_collision": int(keep3.sum()),
    }

    if len(pts3) == 0:
        counts["returned"] = 0
        return AugmentResult((), counts, seed)

    # step 4: uniform subsample, then orient toward the object
    k = min(cfg.output_count, len(pts3))
    chosen = np.sort(rng.choice(len(pts3), size=k, replace=False))
    out = []
    for p in pts3[chosen]:
        d = center - p
        out.append(PelvisCandidate(p, d / np.linalg.norm(d)))
    counts["returned"] = k
    return AugmentResult(tuple(out), counts, seed)


def forward_grasp_target(
    last_walk_pelvis,
    walk_direction,
    candidate: PelvisCandidate,
    object_center=None,
    radius: float = 1.0,
) -> np.ndarray:
    """Adjust a grasp-target pelvis position to lie ahead of the walk.

    Positions behind the final walking pelvis are reflected through the
    plane normal to ``walk_direction``, preserving the lateral offset. When
    ``object_center`` is given, a reflected position that drifted beyond
    ``radius`` of the object is pulled back onto the sphere; the pull stays
    in the forward half-space whenever the object itself is ahead of the
    walk.
    """
    lwp = np.asarray(last_walk_pelvis, dtype=np.float64).reshape(3)
    w = np.asarray(walk_direction, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(w)
    if abs(norm - 1.0) > 1e-6:
        raise SynthError("walk_direction must be a unit vector")
    w = w / norm

    pos = np.asarray(candidate.position, dtype=np.float64).copy()
    d = pos - lwp
    dot = float(d @ w)
    if dot > 0:
        return pos
    d = d - 2.0 * dot * w
    if float(d @ w) <= 0:  # candidate exactly on the plane
        d = d + 1e-9 * w
    pos = lwp + d

    if object_center is not None:
        c = np.asarray(object_center, dtype=np.float64).reshape(3)
        off = pos - c
        dist = float(np.linalg.norm(off))
        if dist > radius and float((c - lwp) @ w) > 0:
            pos = c + off * (radius / dist)
    return pos
