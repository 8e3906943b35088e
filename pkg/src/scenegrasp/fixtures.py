"""Deterministic synthetic fixtures: scenes, objects, trajectories, and
bodies with known ground truth.

Every kind writes mesh/JSON files plus a ``ground_truth.json`` sidecar
holding the constructed-by-design quantities (injected floor deviation,
expected penetration ratios, contact vertex sets, table geometry), so tests
can assert against construction targets instead of recomputation.

Labels: floor=0, wall=1, table=2 (the receptacle).
"""

from __future__ import annotations

import numpy as np

from pathlib import Path

from .body import write_part_map
from .geometry import TriMesh, merge_meshes, write_label_table, write_mesh
from .util import write_json_atomic

FLOOR_LABEL = 0
WALL_LABEL = 1
TABLE_LABEL = 2
LABEL_TABLE = {"floor": FLOOR_LABEL, "wall": WALL_LABEL, "table": TABLE_LABEL}
LABEL_NAMES = {v: k for k, v in LABEL_TABLE.items()}

KINDS = (
    "flat-room",
    "warped-floor",
    "table-scene",
    "boxed-object",
    "graded-penetration",
    "dataset",
)


class FixtureError(ValueError):
    pass


# -- mesh builders -------------------------------------------------------

def box_mesh(lo, hi, label: int | None = None) -> TriMesh:
    """Closed axis-aligned box with outward-facing triangles."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    v = np.array(
        [
            [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
            [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
        ]
    )
    f = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom
            [4, 5, 6], [4, 6, 7],  # top
            [0, 1, 5], [0, 5, 4],  # y = y0
            [2, 3, 7], [2, 7, 6],  # y = y1
            [0, 4, 7], [0, 7, 3],  # x = x0
            [1, 2, 6], [1, 6, 5],  # x = x1
        ]
    )
    labels = None if label is None else np.full(len(f), label)
    return TriMesh(v, f, labels)


def icosahedron_mesh(center, radius: float, label: int | None = None) -> TriMesh:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    v = v / np.linalg.norm(v[0]) * radius + np.asarray(center, dtype=np.float64)
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    labels = None if label is None else np.full(len(f), label)
    return TriMesh(v, f, labels)


def floor_grid_mesh(x0, x1, y0, y1, spacing: float, height_fn=None) -> TriMesh:
    """Triangulated floor patch; ``height_fn(x, y)`` lifts vertices."""
    nx = max(1, int(round((x1 - x0) / spacing)))
    ny = max(1, int(round((y1 - y0) / spacing)))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    z = np.zeros_like(gx) if height_fn is None else height_fn(gx, gy)
    verts = np.column_stack([gx.ravel(), gy.ravel(), z.ravel()])
    faces = []
    for i in range(nx):
        for j in range(ny):
            a = i * (ny + 1) + j
            b = (i + 1) * (ny + 1) + j
            c = (i + 1) * (ny + 1) + j + 1
            d = i * (ny + 1) + j + 1
            faces.append([a, b, c])
            faces.append([a, c, d])
    return TriMesh(verts, np.array(faces), np.full(len(faces), FLOOR_LABEL))


def wall_meshes(x0, x1, y0, y1, height: float) -> TriMesh:
    """Four room walls as vertical quads."""
    quads = [
        [(x0, y0), (x1, y0)],
        [(x1, y0), (x1, y1)],
        [(x1, y1), (x0, y1)],
        [(x0, y1), (x0, y0)],
    ]
    parts = []
    for (ax, ay), (bx, by) in quads:
        v = np.array(
            [[ax, ay, 0.0], [bx, by, 0.0], [bx, by, height], [ax, ay, height]]
        )
        f = np.array([[0, 1, 2], [0, 2, 3]])
        parts.append(TriMesh(v, f, np.full(2, WALL_LABEL)))
    return merge_meshes(parts)


def _piecewise_planar_heights(rng: np.random.Generator, x0, x1, y0, y1, tile: float, sigma: float):
    """C0 height field, planar on each half-tile triangle."""
    nx = int(np.ceil((x1 - x0) / tile))
    ny = int(np.ceil((y1 - y0) / tile))
    corners = rng.normal(0.0, sigma, size=(nx + 1, ny + 1))

    def height(gx, gy):
        u = np.clip((gx - x0) / tile, 0, nx - 1e-12)
        v = np.clip((gy - y0) / tile, 0, ny - 1e-12)
        i = np.floor(u).astype(int)
        j = np.floor(v).astype(int)
        fu = u - i
        fv = v - j
        h00 = corners[i, j]
        h10 = corners[i + 1, j]
        h01 = corners[i, j + 1]
        h11 = corners[i + 1, j + 1]
        lower = fu + fv <= 1.0
        z_lower = h00 + fu * (h10 - h00) + fv * (h01 - h00)
        z_upper = h11 + (1.0 - fu) * (h01 - h11) + (1.0 - fv) * (h10 - h11)
        return np.where(lower, z_lower, z_upper)

    return height


# -- fixture kinds -------------------------------------------------------

def _write_scene(out: Path, scene: TriMesh) -> None:
    write_mesh(scene, out / "scene.obj", label_names=LABEL_NAMES)
    write_label_table(LABEL_TABLE, out / "labels.json")


def _flat_room(seed: int, out: Path, room=6.0, table_top=0.75) -> dict:
    rng = np.random.default_rng(seed)
    half = room / 2.0
    floor = floor_grid_mesh(-half, half, -half, half, 0.125)
    walls = wall_meshes(-half, half, -half, half, 2.4)
    cx, cy = rng.uniform(-half + 1.6, half - 1.6, size=2)
    table = box_mesh(
        (cx - 0.5, cy - 0.35, 0.0), (cx + 0.5, cy + 0.35, table_top), TABLE_LABEL
    )
    scene = merge_meshes([floor, walls, table])
    _write_scene(out, scene)
    gt = {
        "kind": "flat-room",
        "seed": seed,
        "receptacle_label": TABLE_LABEL,
        "floor_label": FLOOR_LABEL,
        "table_top_z": table_top,
        "table_bounds": [cx - 0.5, cy - 0.35, cx + 0.5, cy + 0.35],
        "room_half": half,
    }
    return gt


def _warped_floor(seed: int, out: Path, room=9.0, target_mean=0.115, tile=3.0) -> dict:
    rng = np.random.default_rng(seed)
    half = room / 2.0
    height = _piecewise_planar_heights(rng, -half, half, -half, half, tile, sigma=0.12)
    floor = floor_grid_mesh(-half, half, -half, half, 0.125, height_fn=height)
    # rescale heights so the injected mean |z| hits the target exactly
    scale = target_mean / np.abs(floor.vertices[:, 2]).mean()
    verts = floor.vertices.copy()
    verts[:, 2] *= scale
    floor = TriMesh(verts, floor.faces, floor.face_labels)
    walls = wall_meshes(-half, half, -half, half, 2.4)
    scene = merge_meshes([floor, walls])
    _write_scene(out, scene)
    gt = {
        "kind": "warped-floor",
        "seed": seed,
        "floor_label": FLOOR_LABEL,
        "injected_mean_abs_dev": target_mean,
        "tile": tile,
    }
    return gt


def _table_scene(seed: int, out: Path, room=5.0) -> dict:
    rng = np.random.default_rng(seed)
    half = room / 2.0
    floor = floor_grid_mesh(-half, half, -half, half, 0.125)
    walls = wall_meshes(-half, half, -half, half, 2.2)
    w = rng.uniform(0.4, 0.8)
    d = rng.uniform(0.3, 0.6)
    top = rng.uniform(0.6, 0.9)
    cx, cy = rng.uniform(-half + 1.5, half - 1.5, size=2)
    table = box_mesh((cx - w, cy - d, 0.0), (cx + w, cy + d, top), TABLE_LABEL)
    scene = merge_meshes([floor, walls, table])
    _write_scene(out, scene)

    # graspable object: small closed box or icosphere; tall enough that
    # points just above its top clear the tabletop's occupied voxel layer
    if rng.random() < 0.5:
        s = rng.uniform(0.03, 0.06)
        h = rng.uniform(0.06, 0.12)
        obj = box_mesh((-s, -s, 0.0), (s, s, h))
        obj_kind = "box"
    else:
        r = rng.uniform(0.035, 0.06)
        obj = icosahedron_mesh((0.0, 0.0, 0.0), r)
        obj_kind = "icosahedron"
    write_mesh(obj, out / "object.obj")

    # straight walk at pelvis height, to be aligned by the pipeline
    n = 30
    xs = np.linspace(0.0, 2.0, n)
    pelvis = np.column_stack([xs, np.zeros(n), np.full(n, 0.95)])
    write_json_atomic(
        out / "trajectory.json",
        {"fps": 30.0, "capsule_radius": 0.18, "pelvis": pelvis.tolist()},
    )

    gt = {
        "kind": "table-scene",
        "seed": seed,
        "receptacle_label": TABLE_LABEL,
        "floor_label": FLOOR_LABEL,
        "table_top_z": top,
        "table_bounds": [cx - w, cy - d, cx + w, cy + d],
        "room_half": half,
        "object_kind": obj_kind,
    }
    return gt


def _boxed_object(seed: int, out: Path) -> dict:
    # geometry is fixed regardless of seed
    half = 3.0
    floor = floor_grid_mesh(-half, half, -half, half, 0.125)
    top = 0.8
    pedestal = box_mesh((-0.15, -0.15, 0.0), (0.15, 0.15, top), TABLE_LABEL)
    # walls 0.28 m from the object with deep slabs behind them: a standing
    # cuboid anywhere in the sampling ball hits the pedestal or a slab
    w0, w1 = 0.32, 1.6
    enclosure = [
        box_mesh((-w1, -w1, 0.0), (w1, -w0, 2.0), WALL_LABEL),
        box_mesh((-w1, w0, 0.0), (w1, w1, 2.0), WALL_LABEL),
        box_mesh((-w1, -w0, 0.0), (-w0, w0, 2.0), WALL_LABEL),
        box_mesh((w0, -w0, 0.0), (w1, w0, 2.0), WALL_LABEL),
    ]
    scene = merge_meshes([floor, pedestal] + enclosure)
    _write_scene(out, scene)
    obj = box_mesh((-0.04, -0.04, 0.0), (0.04, 0.04, 0.08))
    write_mesh(obj, out / "object.obj")
    gt = {
        "kind": "boxed-object",
        "seed": seed,
        "receptacle_label": TABLE_LABEL,
        "floor_label": FLOOR_LABEL,
        "table_top_z": top,
        "original_pelvis": [0.9, 0.0, 0.9],
        "expect_empty_augmentation": True,
    }
    return gt


def _chain_faces(num_vertices: int) -> np.ndarray:
    """Arbitrary non-degenerate faces over a fixed vertex set.

    Metric fixtures only consume vertices; faces just make the file a valid
    mesh.
    """
    ids = np.arange(num_vertices - num_vertices % 3)
    return ids.reshape(-1, 3)


def _graded_penetration(
    seed: int,
    out: Path,
    scene_target: float = 0.0435,
    floor_target: float = 0.0362,
    total: int = 10000,
    foot_total: int = 5000,
) -> dict:
    rng = np.random.default_rng(seed)
    scene_count = round(scene_target * total)
    floor_count = round(floor_target * foot_total)
    if abs(scene_count - scene_target * total) > 1e-9 or abs(floor_count - floor_target * foot_total) > 1e-9:
        raise FixtureError(
            f"targets {scene_target}/{floor_target} are not exact at {total}/{foot_total} vertices"
        )

    half = 3.0
    floor = floor_grid_mesh(-half, half, -half, half, 0.5)
    slab_top = 0.5
    slab = box_mesh((-0.5, -0.5, 0.0), (0.5, 0.5, slab_top), TABLE_LABEL)
    scene = merge_meshes([floor, slab])
    _write_scene(out, scene)

    # object resting on the slab; excluded from scene occupancy by convention
    obj = box_mesh((-0.05, -0.05, slab_top), (0.05, 0.05, slab_top + 0.1))
    write_mesh(obj, out / "object.obj")

    hand_total = 100
    other_total = total - foot_total - hand_total

    verts = np.zeros((total, 3))
    # feet: sunk below floor, in floor contact, airborne; all clear of the slab
    foot_xy = np.column_stack([rng.uniform(1.8, 2.6, foot_total), rng.uniform(-2.6, 2.6, foot_total)])
    foot_z = np.full(foot_total, 0.30)
    contact_feet = foot_total // 2
    foot_z[:contact_feet] = 0.01
    foot_z[:floor_count] = -0.01
    verts[:foot_total] = np.column_stack([foot_xy, foot_z])

    # hands: 40 close to the object's +x face (contact), 60 clearly away
    hs = hand_total
    hand_near = 40
    near_y = np.linspace(-0.03, 0.03, 8)
    near_z = np.linspace(slab_top + 0.02, slab_top + 0.08, 5)
    yy, zz = np.meshgrid(near_y, near_z)
    near = np.column_stack([np.full(hand_near, 0.05 + 0.005), yy.ravel(), zz.ravel()])
    far = np.column_stack(
        [
            np.full(hs - hand_near, 0.05 + 0.05),
            np.linspace(-0.03, 0.03, hs - hand_near),
            np.full(hs - hand_near, slab_top + 0.05),
        ]
    )
    verts[foot_total : foot_total + hs] = np.vstack([near, far])

    # other: the scene-penetrating set inside the slab, the rest above it
    base = foot_total + hs
    inside = np.column_stack(
        [
            rng.uniform(-0.35, 0.35, scene_count),
            rng.uniform(-0.35, 0.35, scene_count),
            rng.uniform(0.10, slab_top - 0.10, scene_count),
        ]
    )
    free = np.column_stack(
        [
            rng.uniform(-0.35, 0.35, other_total - scene_count),
            rng.uniform(-0.35, 0.35, other_total - scene_count),
            rng.uniform(slab_top + 0.3, slab_top + 0.9, other_total - scene_count),
        ]
    )
    verts[base:] = np.vstack([inside, free])

    body = TriMesh(verts, _chain_faces(total))
    write_mesh(body, out / "body_000.obj")
    parts = {
        "foot": list(range(foot_total)),
        "hand_R": list(range(foot_total, foot_total + hs)),
    }
    write_part_map(out / "partmap.json", total, parts)

    gt_floor_ids = sorted(range(contact_feet))  # z in {-0.01, 0.01}: all |z| < 2 cm
    gt_object_ids = sorted(range(foot_total, foot_total + hand_near))
    write_json_atomic(
        out / "contacts.json",
        {"frames": [{"object": gt_object_ids, "floor": gt_floor_ids}]},
    )

    pelvis = [2.2, 0.0, 0.95]
    expected_sdf = (hand_near * 0.005 + (hs - hand_near) * 0.05) / hs
    gt = {
        "kind": "graded-penetration",
        "seed": seed,
        "receptacle_label": TABLE_LABEL,
        "floor_label": FLOOR_LABEL,
        "scene_pen": scene_count / total,
        "floor_pen": floor_count / foot_total,
        "object_pen_sdf": expected_sdf,
        "pelvis": pelvis,
        "body_frames": [{"mesh": "body_000.obj", "pelvis": pelvis}],
        "slab_top_z": slab_top,
    }
    return gt


def _dataset(seed: int, out: Path, samples: int = 3) -> dict:
    """A small dataset manifest of table-scene samples with evaluable bodies.

    Bodies and ground-truth contacts are constructed against the
    deterministic placement the pipeline will reproduce, so the generator
    runs the placement stages once itself.
    """
    from . import pipeline as pl  # deferred: fixtures <- pipeline only here

    rows = []
    for i in range(samples):
        sid = f"s{i:03d}"
        sdir = out / sid
        sdir.mkdir(parents=True, exist_ok=True)
        gt = _table_scene(seed * 1000 + i, sdir)
        body_info = pl.build_sample_body(sdir, gt)
        rows.append(
            {
                "sample_id": sid,
                "scene": f"{sid}/scene.obj",
                "labels": f"{sid}/labels.json",
                "receptacle_label": gt["receptacle_label"],
                "floor_label": gt["floor_label"],
                "object": f"{sid}/object.obj",
                "trajectory": f"{sid}/trajectory.json",
                "body_frames": [
                    {"mesh": f"{sid}/{b['mesh']}", "pelvis": b["pelvis"]}
                    for b in body_info["body_frames"]
                ],
                "part_map": f"{sid}/partmap.json",
                "gt_contacts": f"{sid}/contacts.json",
            }
        )
        write_json_atomic(sdir / "ground_truth.json", gt)
    write_json_atomic(out / "dataset.json", {"samples": rows})
    return {"kind": "dataset", "seed": seed, "samples": samples}


def gen_fixture(kind: str, seed: int, out_dir, **params) -> dict:
    """Generate one fixture kind into ``out_dir``; returns (and writes) the
    ground-truth sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if kind == "flat-room":
        gt = _flat_room(seed, out, **params)
    elif kind == "warped-floor":
        gt = _warped_floor(seed, out, **params)
    elif kind == "table-scene":
        gt = _table_scene(seed, out, **params)
    elif kind == "boxed-object":
        gt = _boxed_object(seed, out, **params)
    elif kind == "graded-penetration":
        gt = _graded_penetration(seed, out, **params)
    elif kind == "dataset":
        gt = _dataset(seed, out, **params)
    else:
        raise FixtureError(f"unknown fixture kind {kind!r}; choose from {KINDS}")
    write_json_atomic(out / "ground_truth.json", gt)
    return gt
