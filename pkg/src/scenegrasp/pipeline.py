"""Dataset manifests, pipeline configuration, and the end-to-end runner.

A dataset manifest is a JSON object ``{"samples": [...]}`` whose rows point
at scene/object/trajectory/body files (paths relative to the manifest). Per
sample the runner refines the floor, aligns the walk, places the object,
samples augmented pelvis targets, and evaluates every provided body frame;
grasp/infill stages are pass-through slots (body frames arrive
pre-exported). Sample outputs are written atomically and completed samples
are skipped on rerun, so interrupted runs resume cleanly and identical
seed/config reruns are byte-identical.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .body import BodyFrame, load_body_frame, write_part_map
from .contact import (
    CONTACT_THRESHOLD,
    ContactSet,
    MetricsReport,
    aggregate,
    render_csv,
    render_table,
)
from .contact import evaluate_frame as _evaluate_frame
from .floor import RefineConfig, refine_scene
from .fixtures import LABEL_NAMES
from .geometry import (
    MeshDistanceField,
    TriMesh,
    apply_transform,
    load_label_table,
    load_mesh,
    write_mesh,
)
from .synth import (
    AlignConfig,
    AugmentConfig,
    PlaceConfig,
    Trajectory,
    align_walk,
    augment_pelvis,
    place_object,
    placement_support_gap,
)
from .util import (
    canonical_json,
    log_event,
    read_json,
    sample_seed,
    write_json_atomic,
    write_text_atomic,
)
from .voxel import PenConfig, downward_fill, grid_region, voxelize


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    refine: RefineConfig = field(default_factory=RefineConfig)
    pen: PenConfig = field(default_factory=PenConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    align: AlignConfig = field(default_factory=AlignConfig)
    place: PlaceConfig = field(default_factory=PlaceConfig)
    contact_threshold: float = CONTACT_THRESHOLD
    seed: int = 0
    jobs: int = 1

    def to_json_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["augment"]["cuboid_dims"] = list(self.augment.cuboid_dims)
        d["augment"]["ground_band"] = list(self.augment.ground_band)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "PipelineConfig":
        def build(target, key):
            sub = dict(d.get(key, {}))
            for tup in ("cuboid_dims", "ground_band"):
                if tup in sub:
                    sub[tup] = tuple(sub[tup])
            return target(**sub)

        return cls(
            refine=build(RefineConfig, "refine"),
            pen=build(PenConfig, "pen"),
            augment=build(AugmentConfig, "augment"),
            align=build(AlignConfig, "align"),
            place=build(PlaceConfig, "place"),
            contact_threshold=float(d.get("contact_threshold", CONTACT_THRESHOLD)),
            seed=int(d.get("seed", 0)),
            jobs=int(d.get("jobs", 1)),
        )

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_json_dict(read_json(path))


@dataclass(frozen=True)
class SampleManifest:
    sample_id: str
    scene: str
    labels: str
    receptacle_label: int
    floor_label: int
    object: str
    trajectory: str
    body_frames: tuple[dict, ...] = ()
    part_map: str | None = None
    gt_contacts: str | None = None
    object_pose: dict | None = None
    grid: str | None = None

    @classmethod
    def from_json_dict(cls, d: dict) -> "SampleManifest":
        return cls(
            sample_id=str(d["sample_id"]),
            scene=d["scene"],
            labels=d["labels"],
            receptacle_label=int(d["receptacle_label"]),
            floor_label=int(d.get("floor_label", 0)),
            object=d["object"],
            trajectory=d["trajectory"],
            body_frames=tuple(d.get("body_frames", [])),
            part_map=d.get("part_map"),
            gt_contacts=d.get("gt_contacts"),
            object_pose=d.get("object_pose"),
            grid=d.get("grid"),
        )

    def required_paths(self) -> list[str]:
        paths = [self.scene, self.labels, self.object, self.trajectory]
        if self.part_map:
            paths.append(self.part_map)
        if self.gt_contacts:
            paths.append(self.gt_contacts)
        if self.grid:
            paths.append(self.grid)
        paths.extend(b["mesh"] for b in self.body_frames)
        return paths


def load_dataset_manifest(path) -> tuple[list[SampleManifest], Path]:
    """Load and validate a dataset manifest; returns samples and base dir."""
    base = Path(path).parent
    data = read_json(path)
    samples = [SampleManifest.from_json_dict(d) for d in data["samples"]]
    ids = [s.sample_id for s in samples]
    if len(set(ids)) != len(ids):
        raise PipelineError("duplicate sample ids in dataset manifest")
    for s in samples:
        for rel in s.required_paths():
            if not (base / rel).exists():
                raise PipelineError(f"sample {s.sample_id}: missing file {rel}")
    return samples, base


# -- per-sample stage chain -----------------------------------------------

def _scene_grid(scene: TriMesh, floor_label: int, cfg: PenConfig):
    """Scene-wide occupancy for walk alignment and augmentation.

    The floor plane is excluded from occupancy (floor contact is measured
    separately) and the grid is downward-filled.
    """
    solid = scene.without_label(floor_label)
    box = scene.aabb().padded(cfg.voxel_size)
    return downward_fill(voxelize(solid, box, cfg.voxel_size))


def run_sample_geometry(
    scene: TriMesh,
    floor_label: int,
    receptacle_label: int,
    traj: Trajectory,
    obj: TriMesh,
    config: PipelineConfig,
    seed: int,
):
    """Refine, align, place, and augment for one sample.

    Returns a dict of stage results. Deterministic in its inputs; the
    fixture generator and the runner share this path so constructed ground
    truth stays valid at run time.
    """
    refined, before, after = refine_scene(scene, floor_label, config.refine)
    grid = _scene_grid(refined, floor_label, config.pen)
    walk_tf = align_walk(traj, refined, receptacle_label, config.align, grid)
    walked = traj.pelvis @ walk_tf.rotation.T + walk_tf.translation
    end_position = walked[-1]
    placement = place_object(refined, receptacle_label, end_position, obj, config.place)
    placed_obj = apply_transform(obj, placement.pose)
    receptacle = refined.submesh(refined.faces_with_label(receptacle_label))
    augment = augment_pelvis(
        grid, placed_obj, receptacle, end_position, config.augment, seed
    )
    return {
        "refined": refined,
        "floor_before": before,
        "floor_after": after,
        "grid": grid,
        "walk_transform": walk_tf,
        "walked_pelvis": walked,
        "end_position": end_position,
        "placement": placement,
        "placed_object": placed_obj,
        "augment": augment,
    }


def _load_gt_contacts(path, frame_idx: int) -> tuple[ContactSet, ContactSet]:
    data = read_json(path)
    frames = data["frames"]
    row = frames[frame_idx] if frame_idx < len(frames) else frames[-1]
    return (
        ContactSet("object", frozenset(int(i) for i in row["object"])),
        ContactSet("floor", frozenset(int(i) for i in row["floor"])),
    )


def evaluate_sample_frames(
    sample: SampleManifest,
    base: Path,
    refined: TriMesh,
    placed_obj: TriMesh,
    config: PipelineConfig,
) -> tuple[list[MetricsReport], list[dict]]:
    """Evaluate each provided body frame; failures are recorded, not raised."""
    reports: list[MetricsReport] = []
    failures: list[dict] = []
    if not sample.body_frames:
        return reports, failures
    region = grid_region(placed_obj.aabb().center, config.pen, refined.aabb())
    eval_grid = downward_fill(
        voxelize(refined.without_label(sample.floor_label), region, config.pen.voxel_size)
    )
    fld = MeshDistanceField(placed_obj)
    for idx, frame in enumerate(sample.body_frames):
        frame_id = f"{sample.sample_id}/frame{idx:03d}"
        try:
            body, _ = load_body_frame(
                base / frame["mesh"], base / sample.part_map, frame["pelvis"]
            )
            gt_obj, gt_floor = _load_gt_contacts(base / sample.gt_contacts, idx)
            reports.append(
                _evaluate_frame(
                    body, eval_grid, fld, gt_obj, gt_floor,
                    sample_id=frame_id, threshold=config.contact_threshold,
                )
            )
        except Exception as exc:  # failed frames are counted, never dropped silently
            failures.append({"frame": frame_id, "reason": str(exc)})
    return reports, failures


def process_sample(sample: SampleManifest, base: Path, config: PipelineConfig, out_dir: Path) -> dict:
    """Full stage chain for one sample; returns the output manifest dict."""
    seed = sample_seed(config.seed, sample.sample_id)
    label_table = load_label_table(base / sample.labels)
    scene = load_mesh(base / sample.scene, label_table=label_table)
    obj = load_mesh(base / sample.object)
    traj = Trajectory.load(base / sample.trajectory)

    geo = run_sample_geometry(
        scene, sample.floor_label, sample.receptacle_label, traj, obj, config, seed
    )

    refined_path = out_dir / f"{sample.sample_id}_scene_refined.obj"
    write_mesh(geo["refined"], refined_path, label_names=LABEL_NAMES)

    reports, failures = evaluate_sample_frames(
        sample, base, geo["refined"], geo["placed_object"], config
    )

    placement = geo["placement"]
    gap = placement_support_gap(placement, obj)
    out = {
        "sample_id": sample.sample_id,
        "seed": seed,
        "config": config.to_json_dict(),
        "floor_stats": {
            "before": geo["floor_before"].to_json_dict(),
            "after": geo["floor_after"].to_json_dict(),
        },
        "walk_transform": {
            "rotation": [[float(x) for x in row] for row in geo["walk_transform"].rotation],
            "translation": [float(x) for x in geo["walk_transform"].translation],
        },
        "end_position": [float(x) for x in geo["end_position"]],
        "object_pose": placement.to_json_dict(),
        "support_gap": gap,
        "pelvis_candidates": [c.to_json_dict() for c in geo["augment"].candidates],
        "augment_counts": geo["augment"].counts,
        "frames": [r.to_json_dict() for r in reports],
        "failed_frames": failures,
        "status": "complete",
    }
    return out


# -- batch runner ---------------------------------------------------------

def run_pipeline(
    manifest_path,
    config: PipelineConfig,
    out_dir,
    jobs: int | None = None,
    method_label: str = "pipeline",
) -> dict:
    """Process a dataset manifest; resumable, atomic, deterministic.

    Returns a summary dict with completed/failed/skipped sample ids. Per-
    sample failures are isolated; aggregate outputs cover every successful
    frame, ordered by sample id.
    """
    samples, base = load_dataset_manifest(manifest_path)
    out = Path(out_dir)
    samples_dir = out / "samples"
    samples_dir.mkdir(parents=True, exist_ok=True)
    jobs = jobs or config.jobs

    completed, skipped, failed = [], [], []

    def one(sample: SampleManifest):
        target = samples_dir / f"{sample.sample_id}.json"
        if target.exists():
            existing = read_json(target)
            if existing.get("status") == "complete":
                return ("skipped", sample.sample_id, None)
        try:
            log_event("sample.start", sample_id=sample.sample_id)
            result = process_sample(sample, base, config, samples_dir)
            write_json_atomic(target, result)
            log_event("sample.done", sample_id=sample.sample_id)
            return ("completed", sample.sample_id, None)
        except Exception as exc:
            log_event("sample.failed", sample_id=sample.sample_id, error=str(exc))
            return ("failed", sample.sample_id, str(exc))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, samples))
    else:
        outcomes = [one(s) for s in samples]
    for status, sid, err in outcomes:
        {"completed": completed, "skipped": skipped, "failed": failed}[status].append(
            sid if err is None else {"sample_id": sid, "error": err}
        )

    # rebuild aggregate outputs from all complete sample files, ordered by id
    reports: list[MetricsReport] = []
    frame_lines: list[str] = []
    for sample in samples:
        target = samples_dir / f"{sample.sample_id}.json"
        if not target.exists():
            continue
        data = read_json(target)
        if data.get("status") != "complete":
            continue
        for fr in data["frames"]:
            reports.append(
                MetricsReport(
                    sample_id=fr["sample_id"],
                    scene_pen=fr["scene_pen"],
                    floor_pen=fr["floor_pen"],
                    object_pen_sdf=fr["object_pen_sdf"],
                    object_pen_negative=fr["object_pen_negative"],
                    object_contact=(fr["object_precision"], fr["object_recall"], fr["object_f1"]),
                    floor_contact=(fr["floor_precision"], fr["floor_recall"], fr["floor_f1"]),
                )
            )
    if reports:
        for r in reports:
            frame_lines.append(canonical_json(r.to_json_dict()).rstrip("\n"))
        write_text_atomic(out / "frames.jsonl", "\n".join(frame_lines) + "\n")
        row = aggregate(reports, method_label)
        write_text_atomic(out / "aggregate.csv", render_csv([row]))
        write_text_atomic(out / "aggregate.txt", render_table([row]))

    summary = {
        "completed": completed,
        "skipped": skipped,
        "failed": failed,
        "frames_evaluated": len(reports),
    }
    # the on-disk summary describes dataset STATE, not this invocation, so a
    # resumed rerun rewrites identical bytes
    state = {
        "samples_complete": sorted(set(completed) | set(skipped)),
        "samples_failed": sorted(
            f["sample_id"] if isinstance(f, dict) else f for f in failed
        ),
        "frames_evaluated": len(reports),
        "config": config.to_json_dict(),
    }
    write_json_atomic(out / "summary.json", state)
    return summary


# -- synthetic evaluable bodies (used by the dataset fixture) --------------

def _body_boxes(center_xy: np.ndarray, pelvis_z: float) -> list:
    """Blocky standing body around a pelvis axis.

    Every corner stays within 0.14 m of the axis: walk feasibility keeps
    occupied cell centers beyond the 0.18 m capsule radius, so anything
    within 0.18 - cell half-diagonal of the axis is provably in free cells.
    """
    cx, cy = float(center_xy[0]), float(center_xy[1])
    return [
        ("foot", (cx - 0.10, cy - 0.04, 0.01), (cx - 0.02, cy + 0.09, 0.11)),
        ("foot", (cx + 0.02, cy - 0.04, 0.01), (cx + 0.10, cy + 0.09, 0.11)),
        ("lower_leg", (cx - 0.10, cy - 0.04, 0.12), (cx - 0.03, cy + 0.04, 0.45)),
        ("lower_leg", (cx + 0.03, cy - 0.04, 0.12), (cx + 0.10, cy + 0.04, 0.45)),
        ("pelvis", (cx - 0.09, cy - 0.07, pelvis_z - 0.1), (cx + 0.09, cy + 0.07, pelvis_z + 0.1)),
        ("other", (cx - 0.10, cy - 0.08, pelvis_z + 0.12), (cx + 0.10, cy + 0.08, pelvis_z + 0.5)),
    ]


def build_sample_body(sample_dir: Path, gt: dict, config: PipelineConfig | None = None) -> dict:
    """Construct an evaluable body + ground-truth contacts for a table scene.

    Runs the deterministic geometry chain once to learn where the object
    lands, then builds a collision-free blocky body whose contact vertex
    sets are known by construction: foot-box bottoms sit 1 cm above the
    floor, four hand vertices sit exactly 5 mm off an upward object face,
    and four more sit far beyond the contact threshold.
    """
    from .fixtures import box_mesh  # local import to avoid a cycle at load time
    from .geometry import merge_meshes

    config = config or PipelineConfig()
    sample_dir = Path(sample_dir)
    label_table = load_label_table(sample_dir / "labels.json")
    scene = load_mesh(sample_dir / "scene.obj", label_table=label_table)
    obj = load_mesh(sample_dir / "object.obj")
    traj = Trajectory.load(sample_dir / "trajectory.json")
    seed = sample_seed(config.seed, sample_dir.name)

    geo = run_sample_geometry(
        scene, gt["floor_label"], gt["receptacle_label"], traj, obj, config, seed
    )
    placed = geo["placed_object"]
    end = geo["end_position"]
    pelvis_z = float(end[2])

    boxes = _body_boxes(end[:2], pelvis_z)
    meshes = []
    part_ranges: dict[str, list[int]] = {"foot": [], "lower_leg": [], "pelvis": [], "other": [], "hand_R": []}
    offset = 0
    floor_contact_ids: list[int] = []
    for part, lo, hi in boxes:
        m = box_mesh(lo, hi)
        part_ranges[part].extend(range(offset, offset + 8))
        if part == "foot":
            floor_contact_ids.extend(range(offset, offset + 4))  # bottom corners at z=0.01
        meshes.append(m)
        offset += 8

    # hand: 4 vertices exactly 5 mm off the most upward-facing object face,
    # 4 more well outside the threshold
    normals = placed.face_normals()
    top_face = int(np.argmax(normals[:, 2]))
    n_hat = normals[top_face]
    center = placed.triangles()[top_face].mean(axis=0)
    edges = placed.triangles()[top_face]
    inradius = min(np.linalg.norm(edges[i] - edges[(i + 1) % 3]) for i in range(3)) / 6.0
    t1 = edges[1] - edges[0]
    t1 = t1 / np.linalg.norm(t1)
    t2 = np.cross(n_hat, t1)
    span = min(inradius, 0.002)
    near = [center + 0.005 * n_hat + a * span * t1 + b * span * t2 for a, b in ((1, 0), (-1, 0), (0, 1), (0, -1))]
    # the mesh lies inside the ball (box center, half-diagonal), so points at
    # 2*circum + 0.05 along the normal are at least 0.05 from the surface
    circum = 0.5 * float(np.linalg.norm(placed.aabb().size))
    far_d = 2.0 * circum + 0.05
    far = [center + (far_d + a * 0.001) * n_hat for a in range(4)]
    hand_pts = np.array(near + far)
    hand_faces = np.array([[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]])
    hand_mesh = TriMesh(hand_pts, hand_faces)
    part_ranges["hand_R"].extend(range(offset, offset + 8))
    object_contact_ids = list(range(offset, offset + 4))
    meshes.append(hand_mesh)

    body_mesh = merge_meshes(meshes)
    write_mesh(body_mesh, sample_dir / "body_000.obj")
    write_part_map(sample_dir / "partmap.json", body_mesh.num_vertices, part_ranges)
    pelvis = [float(end[0]), float(end[1]), pelvis_z]
    write_json_atomic(
        sample_dir / "contacts.json",
        {"frames": [{"object": sorted(object_contact_ids), "floor": sorted(floor_contact_ids)}]},
    )

    # construction sanity: the body must be collision-free in the scene grid
    from .body import part_map_from_parts

    body = BodyFrame(
        body_mesh.vertices,
        part_map_from_parts(body_mesh.num_vertices, part_ranges),
        pelvis,
    )
    from .voxel import scene_penetration

    if scene_penetration(body, geo["grid"]) != 0.0:
        raise PipelineError(f"{sample_dir.name}: constructed body intersects the scene grid")

    return {"body_frames": [{"mesh": "body_000.obj", "pelvis": pelvis}]}
