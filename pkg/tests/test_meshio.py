import numpy as np
import pytest

from scenegrasp.fixtures import box_mesh
from scenegrasp.geometry import (
    MeshFormatError,
    TriMesh,
    load_label_table,
    load_mesh,
    write_label_table,
    write_mesh,
)

SINGLE_TRI_OBJ = """\
v 0 0 0
v 1 0 0
v 0 1 0
f 1 2 3
"""

CUBE_OBJ = """\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 3 4 8
f 3 8 7
f 1 5 8
f 1 8 4
f 2 3 7
f 2 7 6
"""


def test_load_single_triangle_obj(tmp_path):
    p = tmp_path / "tri.obj"
    p.write_text(SINGLE_TRI_OBJ)
    m = load_mesh(p)
    assert (m.num_vertices, m.num_faces) == (3, 1)


def test_load_unit_cube_obj(tmp_path):
    p = tmp_path / "cube.obj"
    p.write_text(CUBE_OBJ)
    m = load_mesh(p)
    assert (m.num_vertices, m.num_faces) == (8, 12)
    box = m.aabb()
    assert np.allclose(box.lo, 0.0) and np.allclose(box.hi, 1.0)


def test_face_index_out_of_range(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(MeshFormatError, match="out of range"):
        load_mesh(p)
    # the error carries the line number
    try:
        load_mesh(p)
    except MeshFormatError as exc:
        assert exc.line == 4


def test_degenerate_face_rejected_with_index(tmp_path):
    p = tmp_path / "degen.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n")
    with pytest.raises(MeshFormatError, match="face index 0"):
        load_mesh(p)


def test_parse_error_reports_location(tmp_path):
    p = tmp_path / "broken.obj"
    p.write_text("v 0 0 0\nv 1 0 x\n")
    with pytest.raises(MeshFormatError, match="broken.obj:2"):
        load_mesh(p)


def test_obj_group_labels_via_sidecar(tmp_path):
    p = tmp_path / "scene.obj"
    p.write_text(
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 2 2\nv 3 2 2\nv 2 3 2\n"
        "g floor\nf 1 2 3\ng table\nf 4 5 6\n"
    )
    t = tmp_path / "labels.json"
    write_label_table({"floor": 0, "table": 2}, t)
    table = load_label_table(t)
    m = load_mesh(p, label_table=table)
    assert list(m.face_labels) == [0, 2]


def test_obj_roundtrip_exact(tmp_path, rng):
    verts = rng.normal(size=(20, 3)) * 3.7
    faces = np.array([[i, (i + 1) % 20, (i + 7) % 20] for i in range(0, 18, 3)])
    m = TriMesh(verts, faces)
    p = tmp_path / "rt.obj"
    write_mesh(m, p)
    back = load_mesh(p)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.faces, m.faces)


def test_obj_roundtrip_with_labels(tmp_path):
    m = box_mesh((0, 0, 0), (1, 1, 1), label=2)
    p = tmp_path / "lbl.obj"
    write_mesh(m, p, label_names={2: "table"})
    back = load_mesh(p, label_table={"table": 2})
    assert np.array_equal(back.vertices, m.vertices)
    assert set(back.face_labels.tolist()) == {2}


@pytest.mark.parametrize("binary", [False, True])
def test_ply_roundtrip_exact(tmp_path, rng, binary):
    verts = rng.normal(size=(15, 3)) * 2.1
    faces = np.array([[i, i + 1, i + 2] for i in range(0, 12, 3)])
    labels = np.array([0, 1, 2, 1])
    m = TriMesh(verts, faces, labels)
    p = tmp_path / ("rt_bin.ply" if binary else "rt_ascii.ply")
    write_mesh(m, p, binary=binary)
    back = load_mesh(p)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.faces, m.faces)
    assert np.array_equal(back.face_labels, m.face_labels)


def test_ply_rejects_big_endian(tmp_path):
    p = tmp_path / "be.ply"
    p.write_bytes(b"ply\nformat binary_big_endian 1.0\nend_header\n")
    with pytest.raises(MeshFormatError, match="unsupported PLY format"):
        load_mesh(p)


def test_unknown_extension(tmp_path):
    with pytest.raises(MeshFormatError, match="cannot infer"):
        load_mesh(tmp_path / "mesh.stl")


def test_obj_quads_are_fan_triangulated(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    m = load_mesh(p)
    assert m.num_faces == 2
