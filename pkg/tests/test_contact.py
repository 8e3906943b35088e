import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import mesh_distance_ref, prf1_ref
from scenegrasp.body import BodyFrame, PART_CODE, part_map_from_parts
from scenegrasp.contact import (
    AggregateRow,
    ContactError,
    ContactSet,
    MetricsReport,
    aggregate,
    annotate_contacts,
    evaluate_frame,
    floor_contacts,
    prf1,
    render_csv,
    render_table,
)
from scenegrasp.fixtures import box_mesh
from scenegrasp.geometry import Aabb
from scenegrasp.voxel import downward_fill, voxelize


def _body(verts, parts):
    return BodyFrame(np.asarray(verts, dtype=np.float64), parts, (0, 0, 1))


# -- annotate_contacts -------------------------------------------------------

def test_far_vertices_no_contact(unit_cube):
    verts = np.full((6, 3), 2.0)
    parts = np.full(6, PART_CODE["other"], dtype=np.int8)
    assert len(annotate_contacts(_body(verts, parts), unit_cube)) == 0


def test_exactly_threshold_excluded(unit_cube):
    # the threshold is strict: a vertex at exactly 2 cm is out
    verts = np.array([[0.52, 0.0, 0.0], [0.5199999, 0.0, 0.0]])
    parts = np.full(2, PART_CODE["other"], dtype=np.int8)
    got = annotate_contacts(_body(verts, parts), unit_cube)
    assert got.ids == {1}


def test_interior_vertices_always_contact(unit_cube):
    verts = np.array([[0.0, 0.0, 0.0], [0.3, 0.0, 0.0]])  # deep inside
    parts = np.full(2, PART_CODE["other"], dtype=np.int8)
    got = annotate_contacts(_body(verts, parts), unit_cube)
    assert got.ids == {0, 1}


def test_annotate_matches_bruteforce(icosphere, rng):
    tri = icosphere.triangles()
    verts = rng.uniform(-1.5, 1.5, size=(150, 3))
    keep = np.linalg.norm(verts, axis=1) > 1.0  # exterior points only
    verts = verts[keep]
    parts = np.full(len(verts), PART_CODE["other"], dtype=np.int8)
    got = annotate_contacts(_body(verts, parts), icosphere, threshold=0.1)
    want = {i for i, v in enumerate(verts) if mesh_distance_ref(v, tri) < 0.1}
    assert got.ids == want


def test_threshold_monotonicity(icosphere, rng):
    verts = rng.uniform(-1.3, 1.3, size=(80, 3))
    parts = np.full(len(verts), PART_CODE["other"], dtype=np.int8)
    body = _body(verts, parts)
    small = annotate_contacts(body, icosphere, threshold=0.02)
    large = annotate_contacts(body, icosphere, threshold=0.1)
    assert small.ids <= large.ids


# -- floor_contacts ----------------------------------------------------------

def _standing_body():
    verts = np.array(
        [
            [0, 0, 0.005],   # sole
            [0, 0.1, 0.01],  # sole
            [0, 0, 0.08],    # ankle, foot part but above threshold
            [0, 0, 0.3],     # knee (lower leg)
            [0, 0, -0.015],  # slightly sunk sole
            [0, 0, 0.9],     # pelvis
        ]
    )
    parts = np.array(
        [
            PART_CODE["foot"],
            PART_CODE["foot"],
            PART_CODE["foot"],
            PART_CODE["lower_leg"],
            PART_CODE["foot"],
            PART_CODE["pelvis"],
        ],
        dtype=np.int8,
    )
    return _body(verts, parts)


def test_floor_contacts_soles_only():
    got = floor_contacts(_standing_body())
    assert got.ids == {0, 1, 4}


def test_floor_contacts_airborne_empty():
    body = _standing_body().translated((0, 0, 0.10))
    # the sunk sole at -0.015 rises to 0.085 > 0.02; everything clears
    assert len(floor_contacts(body)) == 0


def test_floor_contacts_requires_legs():
    verts = np.zeros((3, 3))
    parts = np.full(3, PART_CODE["other"], dtype=np.int8)
    with pytest.raises(Exception):
        floor_contacts(_body(verts, parts))


# -- prf1 ----------------------------------------------------------------------

def test_prf1_identity():
    a = ContactSet("object", frozenset({1, 2, 3}))
    assert prf1(a, a) == (1.0, 1.0, 1.0)


def test_prf1_set_arithmetic():
    pred = ContactSet("object", frozenset(range(1, 9)))
    truth = ContactSet("object", frozenset(range(5, 13)))
    assert prf1(pred, truth) == (0.5, 0.5, 0.5)


def test_prf1_empty_conventions():
    empty = ContactSet("floor", frozenset())
    full = ContactSet("floor", frozenset({1}))
    assert prf1(empty, full) == (0.0, 0.0, 0.0)
    assert prf1(full, empty) == (0.0, 0.0, 0.0)
    assert prf1(empty, empty) == (1.0, 1.0, 1.0)


def test_prf1_target_mismatch():
    with pytest.raises(ContactError):
        prf1(ContactSet("object", frozenset()), ContactSet("floor", frozenset()))


@settings(max_examples=100, deadline=None)
@given(
    st.sets(st.integers(0, 30)),
    st.sets(st.integers(0, 30)),
)
def test_prf1_symmetry_and_oracle(pred_ids, truth_ids):
    pred = ContactSet("object", frozenset(pred_ids))
    truth = ContactSet("object", frozenset(truth_ids))
    p, r, f1 = prf1(pred, truth)
    assert (p, r, f1) == prf1_ref(set(pred_ids), set(truth_ids))
    p2, r2, f2 = prf1(truth, pred)
    assert (p2, r2) == (r, p) and f2 == pytest.approx(f1)
    assert 0 <= p <= 1 and 0 <= r <= 1
    if p + r > 0:
        assert f1 == pytest.approx(2 * p * r / (p + r))
    else:
        assert f1 == 0.0


# -- evaluate_frame --------------------------------------------------------------

def _eval_assets():
    slab = box_mesh((2.0, 2.0, 0.0), (3.0, 3.0, 0.5))
    grid = downward_fill(voxelize(slab, Aabb([-1, -1, 0], [4, 4, 2]), 0.05))
    obj = box_mesh((-0.05, -0.05, 0.8), (0.05, 0.05, 0.9))
    return grid, obj


def _ideal_frame():
    verts = np.array(
        [
            [0, 0, 0.01], [0.1, 0, 0.01], [0, 0.1, 0.01], [0.1, 0.1, 0.01],  # soles
            [0, 0, 0.3], [0.1, 0, 0.3],                                       # legs
            [0.0, 0.0, 0.95],                                                  # pelvis
            [0.0, -0.04, 0.855], [0.02, -0.04, 0.855],                         # hand, 1cm off -y face
            [0.0, -0.3, 0.855],                                                # hand, far
        ]
    )
    parts = part_map_from_parts(
        len(verts),
        {
            "foot": [0, 1, 2, 3],
            "lower_leg": [4, 5],
            "pelvis": [6],
            "hand_R": [7, 8, 9],
        },
    )
    body = BodyFrame(verts, parts, (0, 0, 0.95))
    gt_floor = ContactSet("floor", frozenset({0, 1, 2, 3}))
    gt_obj = ContactSet("object", frozenset({7, 8}))
    return body, gt_obj, gt_floor


def test_evaluate_ideal_frame():
    grid, obj = _eval_assets()
    body, gt_obj, gt_floor = _ideal_frame()
    rep = evaluate_frame(body, grid, obj, gt_obj, gt_floor, sample_id="ideal")
    assert rep.scene_pen == 0.0
    assert rep.floor_pen == 0.0
    assert rep.object_contact == (1.0, 1.0, 1.0)
    assert rep.floor_contact == (1.0, 1.0, 1.0)
    assert rep.object_pen_sdf > 0


def test_evaluate_frame_deterministic_and_permutation_invariant(rng):
    grid, obj = _eval_assets()
    body, gt_obj, gt_floor = _ideal_frame()
    rep1 = evaluate_frame(body, grid, obj, gt_obj, gt_floor, sample_id="x")
    rep2 = evaluate_frame(body, grid, obj, gt_obj, gt_floor, sample_id="x")
    assert rep1 == rep2
    perm = rng.permutation(body.num_vertices)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    shuffled = BodyFrame(body.vertices[perm], body.part_of[perm], body.pelvis)
    gt_obj_p = ContactSet("object", frozenset(int(inv[i]) for i in gt_obj.ids))
    gt_floor_p = ContactSet("floor", frozenset(int(inv[i]) for i in gt_floor.ids))
    rep3 = evaluate_frame(shuffled, grid, obj, gt_obj_p, gt_floor_p, sample_id="x")
    assert rep3.scene_pen == rep1.scene_pen
    assert rep3.floor_pen == rep1.floor_pen
    assert rep3.object_pen_sdf == pytest.approx(rep1.object_pen_sdf, abs=1e-12)
    assert rep3.object_contact == rep1.object_contact
    assert rep3.floor_contact == rep1.floor_contact


# -- aggregate --------------------------------------------------------------------

def _report(sid, scene=0.02, floor=0.01, sdf=0.005, oc=(0.9, 0.8, 0.846), fc=(1.0, 1.0, 1.0)):
    return MetricsReport(
        sample_id=sid,
        scene_pen=scene,
        floor_pen=floor,
        object_pen_sdf=sdf,
        object_pen_negative=0,
        object_contact=oc,
        floor_contact=fc,
    )


def test_aggregate_single_report_is_identity():
    row = aggregate([_report("a")], "m")
    assert row.count == 1
    assert row.means["scene_pen"] == 0.02
    assert row.means["object_f1"] == 0.846


def test_aggregate_two_reports_mean():
    row = aggregate([_report("a", scene=0.02), _report("b", scene=0.04)], "m")
    assert row.means["scene_pen"] == pytest.approx(0.03)


def test_aggregate_matches_recompute(rng):
    reports = [
        _report(
            f"s{i}",
            scene=float(rng.random()),
            floor=float(rng.random()),
            sdf=float(rng.normal()),
            oc=tuple(rng.random(3)),
            fc=tuple(rng.random(3)),
        )
        for i in range(100)
    ]
    row = aggregate(reports, "m")
    for key in MetricsReport.FIELDS:
        want = float(np.mean([r.values()[key] for r in reports]))
        assert row.means[key] == pytest.approx(want, abs=1e-12)


def test_aggregate_requires_reports():
    with pytest.raises(ContactError):
        aggregate([], "m")


def test_render_table_grouping():
    table = render_table([aggregate([_report("a")], "toolkit")])
    head = table.splitlines()[0]
    assert "Penetration" in head and "Object Contact" in head and "Floor Contact" in head
    assert "toolkit" in table
    csv = render_csv([aggregate([_report("a")], "toolkit")])
    assert csv.splitlines()[0].startswith("method,scene_pen,")


def test_metrics_report_validation():
    with pytest.raises(ContactError):
        _report("bad", scene=1.5)
