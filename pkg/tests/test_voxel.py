import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    downward_fill_ref,
    scene_penetration_ref,
    voxelize_ref,
)
from scenegrasp.body import BodyFrame, PART_CODE, BodyError
from scenegrasp.fixtures import box_mesh
from scenegrasp.geometry import Aabb, RigidTransform, TriMesh, apply_transform
from scenegrasp.voxel import (
    ObjectPenetration,
    PenConfig,
    ResolutionError,
    VoxelGrid,
    VoxelError,
    downward_fill,
    dump_grid_json,
    floor_penetration,
    load_grid,
    object_penetration,
    pen_loss,
    save_grid,
    scene_penetration,
    voxelize,
)


def _random_triangles(rng, n, span):
    base = rng.uniform(0.0, span, size=(n, 3))
    offs = rng.uniform(-span / 3, span / 3, size=(n, 2, 3))
    return np.stack([base, base + offs[:, 0], base + offs[:, 1]], axis=1)


def _body(vertices, parts=None, pelvis=(0, 0, 1)):
    v = np.asarray(vertices, dtype=np.float64)
    if parts is None:
        parts = np.full(len(v), PART_CODE["other"], dtype=np.int8)
    return BodyFrame(v, parts, pelvis)


# -- voxelize --------------------------------------------------------------

def test_empty_scene_all_cells_empty():
    empty = TriMesh(np.zeros((3, 3)) + [[0, 0, 0], [1, 0, 0], [0, 1, 0]], np.empty((0, 3), dtype=int))
    grid = voxelize(empty, Aabb([0, 0, 0], [1, 1, 1]), 0.25)
    assert grid.num_occupied == 0


def test_single_quad_occupies_one_layer():
    v = np.array([[0, 0, 0.12], [1, 0, 0.12], [1, 1, 0.12], [0, 1, 0.12]])
    quad = TriMesh(v, [[0, 1, 2], [0, 2, 3]])
    grid = voxelize(quad, Aabb([0, 0, 0], [1, 1, 0.5]), 0.05)
    layers = set(k for _, _, k in np.argwhere(grid.occupancy))
    assert layers == {2}  # 0.12 lies in [0.10, 0.15)


def test_boundary_plane_sinks_to_lower_layer():
    v = np.array([[0, 0, 0.10], [1, 0, 0.10], [1, 1, 0.10], [0, 1, 0.10]])
    quad = TriMesh(v, [[0, 1, 2], [0, 2, 3]])
    grid = voxelize(quad, Aabb([0, 0, 0], [1, 1, 0.5]), 0.05)
    layers = set(k for _, _, k in np.argwhere(grid.occupancy))
    assert layers == {1}


def test_voxelize_matches_bruteforce_oracle(rng):
    for trial in range(30):
        dims = rng.integers(3, 13, size=3)
        s = float(rng.uniform(0.04, 0.3))
        origin = rng.uniform(-1, 1, size=3)
        span = float(dims.max()) * s
        tris = _random_triangles(rng, int(rng.integers(1, 5)), span) + origin
        mesh = TriMesh(tris.reshape(-1, 3), np.arange(len(tris) * 3).reshape(-1, 3))
        region = Aabb(origin, origin + dims * s)
        got = voxelize(mesh, region, s)
        want = voxelize_ref(mesh.triangles(), origin, s, got.dims)
        assert np.array_equal(got.occupancy, want), f"trial {trial}"


def test_cell_budget_enforced():
    quad = box_mesh((0, 0, 0), (1, 1, 1))
    with pytest.raises(ResolutionError):
        voxelize(quad, Aabb([0, 0, 0], [10, 10, 10]), 0.01, cell_budget=1000)


# -- downward fill -----------------------------------------------------------

def test_fill_empty_grid():
    g = VoxelGrid(np.zeros(3), 0.1, np.zeros((4, 4, 4), dtype=bool))
    assert downward_fill(g).num_occupied == 0


def test_fill_single_cell_fills_column():
    occ = np.zeros((3, 3, 5), dtype=bool)
    occ[1, 2, 3] = True
    g = downward_fill(VoxelGrid(np.zeros(3), 0.1, occ))
    assert g.occupancy[1, 2, :4].all() and not g.occupancy[1, 2, 4]
    assert g.num_occupied == 4


def test_fill_matches_column_oracle(rng):
    for _ in range(30):
        dims = tuple(rng.integers(2, 9, size=3))
        occ = rng.random(dims) < 0.2
        got = downward_fill(VoxelGrid(np.zeros(3), 0.1, occ))
        assert np.array_equal(got.occupancy, downward_fill_ref(occ))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**30 - 1))
def test_fill_idempotent_and_monotone(seed):
    rng = np.random.default_rng(seed)
    occ = rng.random((5, 4, 6)) < 0.25
    g = VoxelGrid(np.zeros(3), 0.1, occ)
    once = downward_fill(g)
    twice = downward_fill(once)
    assert np.array_equal(once.occupancy, twice.occupancy)
    assert not (occ & ~once.occupancy).any()  # never clears a bit
    assert once.num_occupied >= g.num_occupied


# -- metrics -----------------------------------------------------------------

def _slab_grid():
    slab = box_mesh((0.0, 0.0, 0.0), (1.0, 1.0, 0.5))
    region = Aabb([-0.5, -0.5, 0], [1.5, 1.5, 1.5])
    return downward_fill(voxelize(slab, region, 0.05))


def test_scene_penetration_outside_is_zero():
    grid = _slab_grid()
    body = _body(np.full((10, 3), 5.0))
    assert scene_penetration(body, grid) == 0.0


def test_scene_penetration_three_of_ten():
    grid = _slab_grid()
    verts = np.full((10, 3), 5.0)
    verts[:3] = [0.5, 0.5, 0.25]  # deep inside the slab
    assert scene_penetration(_body(verts), grid) == pytest.approx(0.3)


def test_scene_penetration_paper_magnitude_fixture():
    # 10000 vertices, 313 inside occupied cells -> exactly 3.13%
    grid = _slab_grid()
    n, k = 10000, 313
    verts = np.full((n, 3), 5.0)
    verts[:k] = [0.5, 0.5, 0.25]
    assert scene_penetration(_body(verts), grid) == 0.0313


def test_scene_penetration_matches_oracle(rng):
    grid = _slab_grid()
    for _ in range(20):
        verts = rng.uniform(-1, 2, size=(rng.integers(5, 60), 3))
        got = scene_penetration(_body(verts), grid)
        want = scene_penetration_ref(verts, grid.origin, grid.voxel_size, grid.occupancy)
        assert got == pytest.approx(want, abs=1e-12)


def test_scene_penetration_permutation_invariant(rng):
    grid = _slab_grid()
    verts = rng.uniform(-1, 2, size=(50, 3))
    perm = rng.permutation(50)
    assert scene_penetration(_body(verts), grid) == scene_penetration(_body(verts[perm]), grid)


def test_scene_penetration_grid_translation_invariant(rng):
    occ = rng.random((6, 6, 6)) < 0.3
    verts = rng.uniform(0, 0.6, size=(40, 3))
    g0 = VoxelGrid(np.zeros(3), 0.1, occ, filled=True)
    shift = np.array([3, -2, 5]) * 0.1  # exact multiple of the voxel size
    g1 = VoxelGrid(shift, 0.1, occ, filled=True)
    assert scene_penetration(_body(verts), g0) == scene_penetration(_body(verts + shift), g1)


def test_floor_penetration_counts():
    parts = np.full(100, PART_CODE["foot"], dtype=np.int8)
    verts = np.zeros((100, 3))
    verts[:29, 2] = -0.01
    body = BodyFrame(verts, parts, (0, 0, 1))
    assert floor_penetration(body) == pytest.approx(0.29)
    lifted = body.translated((0, 0, 0.5))
    assert floor_penetration(lifted) == 0.0


def test_floor_penetration_needs_feet():
    with pytest.raises(BodyError):
        floor_penetration(_body(np.zeros((5, 3))))


def test_object_penetration_mean(unit_cube):
    parts = np.array([PART_CODE["hand_R"], PART_CODE["hand_L"]], dtype=np.int8)
    # one vertex 0.02 inside a face, one 0.04 outside
    verts = np.array([[0.48, 0, 0], [0.54, 0, 0]])
    body = BodyFrame(verts, parts, (0, 0, 1))
    pen = object_penetration(body, unit_cube)
    assert isinstance(pen, ObjectPenetration)
    assert pen.mean_sdf == pytest.approx((-0.02 + 0.04) / 2, abs=1e-9)
    assert pen.negative_count == 1


def test_object_penetration_exterior_bound(unit_cube, rng):
    parts = np.full(30, PART_CODE["hand_R"], dtype=np.int8)
    dirs = rng.normal(size=(30, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    verts = dirs * 2.0  # all at least 0.1 from the unit cube
    body = BodyFrame(verts, parts, (0, 0, 1))
    assert object_penetration(body, unit_cube).mean_sdf >= 0.1


def test_object_penetration_requires_watertight():
    open_mesh = TriMesh(np.eye(3), [[0, 1, 2]])
    parts = np.full(2, PART_CODE["hand_R"], dtype=np.int8)
    body = BodyFrame(np.zeros((2, 3)) + 0.1, parts, (0, 0, 1))
    with pytest.raises(VoxelError, match="watertight"):
        object_penetration(body, open_mesh)


def test_object_penetration_rigid_invariance(unit_cube, rng):
    parts = np.full(20, PART_CODE["hand_L"], dtype=np.int8)
    verts = rng.uniform(-0.8, 0.8, size=(20, 3))
    body = BodyFrame(verts, parts, (0, 0, 1))
    base = object_penetration(body, unit_cube).mean_sdf
    t = RigidTransform.from_yaw(1.1, translation=(0.4, -2.0, 0.7))
    moved_body = BodyFrame(t.apply(verts), parts, (0, 0, 1))
    moved_cube = apply_transform(unit_cube, t)
    assert object_penetration(moved_body, moved_cube).mean_sdf == pytest.approx(base, abs=1e-6)


def test_pen_loss_indicator_equals_scene_penetration(rng):
    grid = _slab_grid()
    for _ in range(10):
        verts = rng.uniform(-1, 2, size=(30, 3))
        assert pen_loss(verts, grid) == scene_penetration(_body(verts), grid)


def test_pen_loss_collision_free_is_zero():
    grid = _slab_grid()
    assert pen_loss(np.full((5, 3), 9.0), grid) == 0.0


def test_pen_loss_depth_weighted_column():
    grid = _slab_grid()  # slab top at z=0.5
    vert = np.array([[0.5, 0.5, 0.4]])  # 0.10 below the occupied column top
    assert pen_loss(vert, grid, depth_weighted=True) == pytest.approx(0.10, abs=1e-9)


# -- refinement monotonicity of the grid ------------------------------------

def test_halving_voxel_size_keeps_true_collisions(rng):
    slab = box_mesh((0.0, 0.0, 0.0), (1.0, 1.0, 0.5))
    region = Aabb([-0.5, -0.5, 0], [1.5, 1.5, 1.5])
    inside = np.column_stack(
        [rng.uniform(0.1, 0.9, 25), rng.uniform(0.1, 0.9, 25), rng.uniform(0.1, 0.4, 25)]
    )
    for s in (0.1, 0.05, 0.025):
        grid = downward_fill(voxelize(slab, region, s))
        assert scene_penetration(_body(inside), grid) == 1.0


# -- serialization -----------------------------------------------------------

def test_grid_roundtrip(tmp_path, rng):
    occ = rng.random((7, 5, 9)) < 0.3
    g = VoxelGrid(np.array([0.3, -1.2, 0.0]), 0.07, occ, filled=True)
    p = tmp_path / "g.vox"
    save_grid(g, p)
    back = load_grid(p)
    assert np.array_equal(back.occupancy, g.occupancy)
    assert back.voxel_size == g.voxel_size
    assert back.filled is True
    assert np.allclose(back.origin, g.origin)


def test_grid_json_dump(tmp_path):
    occ = np.zeros((2, 2, 2), dtype=bool)
    occ[1, 0, 1] = True
    g = VoxelGrid(np.zeros(3), 0.5, occ)
    p = tmp_path / "g.json"
    dump_grid_json(g, p)
    import json

    data = json.loads(p.read_text())
    assert data["occupied"] == [[1, 0, 1]]
    big = VoxelGrid(np.zeros(3), 0.5, np.zeros((64, 64, 64), dtype=bool))
    with pytest.raises(VoxelError):
        dump_grid_json(big, tmp_path / "big.json")


def test_pen_config_validation():
    with pytest.raises(VoxelError):
        PenConfig(voxel_size=-1)
