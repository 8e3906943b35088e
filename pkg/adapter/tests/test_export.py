import json

import numpy as np
import pytest

from bodyexport import (
    BodyModel,
    ExportError,
    ExportSpec,
    ModelError,
    export_frames,
    load_model,
    rodrigues,
)
from bodyexport.cli import main
from conftest import FULL_BODY_VERTS, make_tube_model


def test_rodrigues_basics():
    assert np.allclose(rodrigues([0, 0, 0]), np.eye(3))
    r = rodrigues([0, 0, np.pi / 2])
    assert np.allclose(r @ [1, 0, 0], [0, 1, 0], atol=1e-12)


def test_model_validation():
    verts, _, joints, parents, weights = make_tube_model()
    with pytest.raises(ModelError, match="weight rows"):
        BodyModel(verts, joints, parents, weights * 2.0)
    bad_parents = parents.copy()
    bad_parents[0] = 0
    with pytest.raises(ModelError, match="tree"):
        BodyModel(verts, joints, bad_parents, weights)


def test_rest_pose_reproduces_template(model_dir):
    model = load_model(model_dir / "model.npz")
    verts, pelvis = model.pose(np.zeros((model.num_joints, 3)), np.zeros(3))
    assert np.allclose(verts, model.v_template, atol=1e-12)
    assert np.allclose(pelvis, model.rest_pelvis)


def test_root_rotation_pivots_at_pelvis(model_dir):
    model = load_model(model_dir / "model.npz")
    pose = np.zeros((model.num_joints, 3))
    pose[0] = [0, 0, 1.1]  # yaw the whole body about the root
    verts, pelvis = model.pose(pose, np.zeros(3))
    r = rodrigues([0, 0, 1.1])
    want = (model.v_template - model.rest_pelvis) @ r.T + model.rest_pelvis
    assert np.allclose(verts, want, atol=1e-9)
    assert np.allclose(pelvis, model.rest_pelvis)


def test_export_all_frames(model_dir):
    spec = ExportSpec.load(model_dir / "spec.json")
    index = export_frames(spec)
    assert len(index["frames"]) == 10
    assert index["num_vertices"] == FULL_BODY_VERTS
    for row in index["frames"]:
        lines = (model_dir / "out" / row["mesh"]).read_text().splitlines()
        n_verts = sum(1 for line in lines if line.startswith("v "))
        n_faces = sum(1 for line in lines if line.startswith("f "))
        assert n_verts == FULL_BODY_VERTS
        assert n_faces == FULL_BODY_VERTS // 3
    on_disk = json.loads((model_dir / "out" / "index.json").read_text())
    assert on_disk == index


def test_rest_frame_pelvis_height(model_dir):
    spec = ExportSpec.load(model_dir / "spec.json")
    index = export_frames(spec)
    model = load_model(model_dir / "model.npz")
    # frame 0 is the rest pose with zero translation
    assert abs(index["frames"][0]["pelvis"][2] - model.rest_pelvis[2]) < 1e-3


def test_empty_selection(model_dir):
    data = json.loads((model_dir / "spec.json").read_text())
    data["frames"] = []
    (model_dir / "spec2.json").write_text(json.dumps(data))
    index = export_frames(ExportSpec.load(model_dir / "spec2.json"))
    assert index["frames"] == []
    assert not list((model_dir / "out").glob("frame_*.obj"))


def test_frame_selection_bounds_checked(model_dir):
    data = json.loads((model_dir / "spec.json").read_text())
    data["frames"] = [0, 99]
    (model_dir / "spec3.json").write_text(json.dumps(data))
    with pytest.raises(ExportError, match="frame 99"):
        export_frames(ExportSpec.load(model_dir / "spec3.json"))


def test_part_table_vertex_count_mismatch(model_dir):
    table = json.loads((model_dir / "parts.json").read_text())
    table["num_vertices"] = 123
    (model_dir / "bad_parts.json").write_text(json.dumps(table))
    data = json.loads((model_dir / "spec.json").read_text())
    data["part_table"] = "bad_parts.json"
    (model_dir / "spec4.json").write_text(json.dumps(data))
    with pytest.raises(ExportError, match="covers 123"):
        export_frames(ExportSpec.load(model_dir / "spec4.json"))


def test_missing_assets_error(model_dir):
    data = json.loads((model_dir / "spec.json").read_text())
    data["model"] = "nope.npz"
    (model_dir / "spec5.json").write_text(json.dumps(data))
    with pytest.raises(ModelError, match="cannot open"):
        export_frames(ExportSpec.load(model_dir / "spec5.json"))


def test_vertex_ordering_stable_across_frames(model_dir):
    # a translated rest frame must differ from frame 0 by exactly the offset
    poses = np.zeros((2, 5, 3))
    trans = np.array([[0.0, 0.0, 0.0], [0.4, -0.2, 0.0]])
    np.savez(model_dir / "simple.npz", poses=poses, trans=trans)
    data = json.loads((model_dir / "spec.json").read_text())
    data["sequence"] = "simple.npz"
    data["output_dir"] = "out_simple"
    (model_dir / "spec6.json").write_text(json.dumps(data))
    export_frames(ExportSpec.load(model_dir / "spec6.json"))

    def read_verts(name):
        rows = []
        for line in (model_dir / "out_simple" / name).read_text().splitlines():
            if line.startswith("v "):
                rows.append([float(x) for x in line.split()[1:]])
        return np.array(rows)

    a = read_verts("frame_0000.obj")
    b = read_verts("frame_0001.obj")
    assert np.allclose(b - a, [0.4, -0.2, 0.0], atol=1e-12)


def test_export_deterministic(model_dir):
    spec = ExportSpec.load(model_dir / "spec.json")
    export_frames(spec)
    first = {p.name: p.read_bytes() for p in (model_dir / "out").iterdir()}
    export_frames(spec)
    second = {p.name: p.read_bytes() for p in (model_dir / "out").iterdir()}
    assert first == second


def test_cli(model_dir):
    assert main(["export", "--spec", str(model_dir / "spec.json")]) == 0
    assert main(["export", "--spec", str(model_dir / "missing.json")]) == 2
    assert main([]) == 2
