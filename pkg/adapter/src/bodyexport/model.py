"""Linear blend skinned body model.

The model asset is an NPZ archive with:

- ``v_template``: (V, 3) rest vertices
- ``joints``: (J, 3) rest joint positions, joint 0 is the pelvis root
- ``parents``: (J,) kinematic tree, parents[0] == -1
- ``weights``: (V, J) skinning weights, rows summing to 1

Posing follows the standard formulation: per-joint axis-angle rotations
compose along the kinematic chain into world transforms, vertices are
skinned by their weighted joint transforms, and a global translation is
added last. The rest pose (all-zero rotations, zero translation) reproduces
the template exactly and puts the pelvis at its rest position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ModelError(ValueError):
    pass


def rodrigues(axis_angle: np.ndarray) -> np.ndarray:
    """Rotation matrix from an axis-angle vector."""
    aa = np.asarray(axis_angle, dtype=np.float64).reshape(3)
    angle = float(np.linalg.norm(aa))
    if angle < 1e-12:
        return np.eye(3)
    axis = aa / angle
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


@dataclass(frozen=True)
class BodyModel:
    v_template: np.ndarray
    joints: np.ndarray
    parents: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v_template, dtype=np.float64)
        j = np.asarray(self.joints, dtype=np.float64)
        p = np.asarray(self.parents, dtype=np.int64).reshape(-1)
        w = np.asarray(self.weights, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ModelError(f"v_template must be (V, 3), got {v.shape}")
        if j.ndim != 2 or j.shape[1] != 3:
            raise ModelError(f"joints must be (J, 3), got {j.shape}")
        if len(p) != len(j) or p[0] != -1 or np.any(p[1:] >= np.arange(1, len(j))):
            raise ModelError("parents must be a topologically ordered tree rooted at 0")
        if w.shape != (len(v), len(j)):
            raise ModelError(f"weights must be (V, J) = ({len(v)}, {len(j)}), got {w.shape}")
        if not np.allclose(w.sum(axis=1), 1.0, atol=1e-9):
            raise ModelError("skinning weight rows must sum to 1")
        for a in (v, j, p, w):
            a.flags.writeable = False
        object.__setattr__(self, "v_template", v)
        object.__setattr__(self, "joints", j)
        object.__setattr__(self, "parents", p)
        object.__setattr__(self, "weights", w)

    @property
    def num_vertices(self) -> int:
        return len(self.v_template)

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    @property
    def rest_pelvis(self) -> np.ndarray:
        return self.joints[0]

    def joint_transforms(self, pose: np.ndarray) -> np.ndarray:
        """World 4x4 transforms per joint for an axis-angle pose (J, 3)."""
        pose = np.asarray(pose, dtype=np.float64).reshape(self.num_joints, 3)
        out = np.zeros((self.num_joints, 4, 4))
        for i in range(self.num_joints):
            local = np.eye(4)
            local[:3, :3] = rodrigues(pose[i])
            if self.parents[i] < 0:
                local[:3, 3] = self.joints[i]
                out[i] = local
            else:
                local[:3, 3] = self.joints[i] - self.joints[self.parents[i]]
                out[i] = out[self.parents[i]] @ local
        return out

    def pose(self, pose: np.ndarray, translation) -> tuple[np.ndarray, np.ndarray]:
        """Skinned vertices and the posed pelvis position for one frame."""
        trans = np.asarray(translation, dtype=np.float64).reshape(3)
        g = self.joint_transforms(pose)
        # remove the rest-pose joint locations before skinning
        skin = g.copy()
        skin[:, :3, 3] -= np.einsum("jab,jb->ja", g[:, :3, :3], self.joints)
        blended = np.einsum("vj,jab->vab", self.weights, skin)
        verts = (
            np.einsum("vab,vb->va", blended[:, :3, :3], self.v_template)
            + blended[:, :3, 3]
            + trans
        )
        pelvis = g[0, :3, 3] + trans
        return verts, pelvis


def load_model(path) -> BodyModel:
    try:
        blob = np.load(path)
    except OSError as exc:
        raise ModelError(f"cannot open model asset {path}: {exc}") from exc
    try:
        return BodyModel(
            blob["v_template"], blob["joints"], blob["parents"], blob["weights"]
        )
    except KeyError as exc:
        raise ModelError(f"model asset {path} is missing array {exc}") from exc
