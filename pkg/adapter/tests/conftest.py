from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

FULL_BODY_VERTS = 10475  # the parametric body model's vertex count


def make_tube_model(num_vertices: int = FULL_BODY_VERTS):
    """Synthetic body-model arrays: a vertical tube skinned to a joint chain.

    419 rings x 25 segments = 10475 vertices exactly. Joints: pelvis root,
    spine, head above it; knee and ankle below. Weights blend linearly
    between the two nearest joints by height.
    """
    rings, segs = num_vertices // 25, 25
    if rings * segs != num_vertices:
        raise ValueError("vertex count must be divisible by 25")
    zs = np.linspace(0.02, 1.65, rings)
    angles = np.linspace(0.0, 2 * np.pi, segs, endpoint=False)
    radius = 0.12
    verts = np.array(
        [[radius * np.cos(a), radius * np.sin(a), z] for z in zs for a in angles]
    )
    # quads between consecutive rings, fan-free topology
    faces = []
    for r in range(rings - 1):
        for s in range(segs):
            a = r * segs + s
            b = r * segs + (s + 1) % segs
            c = (r + 1) * segs + (s + 1) % segs
            d = (r + 1) * segs + s
            faces.append([a, b, c])
            faces.append([a, c, d])
    faces = np.array(faces)

    joints = np.array(
        [
            [0.0, 0.0, 0.95],  # pelvis (root)
            [0.0, 0.0, 1.25],  # spine
            [0.0, 0.0, 1.55],  # head
            [0.0, 0.0, 0.50],  # knee
            [0.0, 0.0, 0.10],  # ankle
        ]
    )
    parents = np.array([-1, 0, 1, 0, 3])

    order = np.argsort(joints[:, 2])  # ankle, knee, pelvis, spine, head
    jz = joints[order, 2]
    weights = np.zeros((num_vertices, len(joints)))
    for vi, z in enumerate(verts[:, 2]):
        k = np.searchsorted(jz, z)
        if k == 0:
            weights[vi, order[0]] = 1.0
        elif k == len(jz):
            weights[vi, order[-1]] = 1.0
        else:
            t = (z - jz[k - 1]) / (jz[k] - jz[k - 1])
            weights[vi, order[k - 1]] = 1.0 - t
            weights[vi, order[k]] = t
    return verts, faces, joints, parents, weights


def make_part_table(verts: np.ndarray) -> dict:
    """Height-band segmentation: ankle-and-below is foot, knee-to-ankle is
    lower leg; a band of the tube stands in for the right hand."""
    z = verts[:, 2]
    parts = {
        "foot": np.flatnonzero(z < 0.10).tolist(),
        "lower_leg": np.flatnonzero((z >= 0.10) & (z < 0.50)).tolist(),
        "pelvis": np.flatnonzero((z >= 0.85) & (z < 1.05)).tolist(),
        "hand_R": np.flatnonzero((z >= 1.05) & (z < 1.15)).tolist(),
    }
    return {"version": 1, "num_vertices": len(verts), "parts": parts}


@pytest.fixture()
def model_dir(tmp_path) -> Path:
    verts, faces, joints, parents, weights = make_tube_model()
    np.savez(
        tmp_path / "model.npz",
        v_template=verts,
        joints=joints,
        parents=parents,
        weights=weights,
    )
    np.save(tmp_path / "faces.npy", faces)
    with open(tmp_path / "parts.json", "w") as fh:
        json.dump(make_part_table(verts), fh)

    rng = np.random.default_rng(7)
    n_frames = 10
    poses = np.zeros((n_frames, len(joints), 3))
    poses[1:, 3, 0] = rng.uniform(-0.4, 0.4, n_frames - 1)  # knee bend
    poses[1:, 0, 2] = rng.uniform(-0.5, 0.5, n_frames - 1)  # root yaw
    trans = np.zeros((n_frames, 3))
    trans[1:] = rng.uniform(-1.0, 1.0, (n_frames - 1, 3)) * np.array([1, 1, 0.1])
    np.savez(tmp_path / "walk.npz", poses=poses, trans=trans)

    spec = {
        "sequence": "walk.npz",
        "model": "model.npz",
        "output_dir": "out",
        "part_table": "parts.json",
        "frames": "all",
    }
    with open(tmp_path / "spec.json", "w") as fh:
        json.dump(spec, fh)
    return tmp_path
