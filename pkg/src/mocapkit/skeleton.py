"""Skeleton and motion types, forward kinematics, and BVH export.

A skeleton is a topologically ordered joint tree (parent index below child
index, root first) with one frame-constant offset vector per joint. A motion
holds per-frame root translation plus per-frame local joint rotations as
row-major 3x3 matrices. Units are centimeters and degrees.

File schema::

    {
      "joints": [{"name": "hip", "parent": -1, "offset": [x, y, z]}, ...],
      "frames": [{"root_t": [x, y, z], "rotations": [[9 floats], ...]}, ...]
    }

A skeleton-only file is the same document with ``frames`` empty.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ValidationError
from .sequence import _frozen
from .serialize import dump_json, load_json


@dataclass(frozen=True)
class Skeleton:
    joint_names: tuple
    parents: np.ndarray  # (J,) int, -1 for the root
    offsets: np.ndarray  # (J, 3) cm, offset from parent in the rest pose

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "parents", _frozen(self.parents, int))
        object.__setattr__(self, "offsets", _frozen(self.offsets))
        j = len(self.joint_names)
        if self.parents.shape != (j,) or self.offsets.shape != (j, 3):
            raise ValidationError("skeleton field shapes disagree")
        if j < 1 or self.parents[0] != -1:
            raise ValidationError("joint 0 must be the root (parent -1)")
        for i in range(1, j):
            if not 0 <= self.parents[i] < i:
                raise ValidationError(
                    f"joint {i} parent {self.parents[i]} breaks topological order"
                )
        if not np.isfinite(self.offsets).all():
            raise ValidationError("offsets must be finite")

    @property
    def n_joints(self):
        return len(self.joint_names)

    def children(self, j):
        return [i for i in range(self.n_joints) if self.parents[i] == j]

    def tpose_positions(self):
        """Joint positions with identity rotations and the root at the origin."""
        pos = np.zeros((self.n_joints, 3))
        for i in range(1, self.n_joints):
            pos[i] = pos[self.parents[i]] + self.offsets[i]
        return pos

    def mean_bone_length(self):
        """Mean offset norm over non-root joints."""
        if self.n_joints < 2:
            raise ValidationError("skeleton has no bones")
        return float(np.linalg.norm(self.offsets[1:], axis=1).mean())


@dataclass(frozen=True)
class Motion:
    """Per-frame root translation and local joint rotations.

    Rotation entries are expected to be orthonormal with det +1; constructors
    in this package guarantee it, and the invariant tests enforce it at 1e-6.
    It is not re-checked here so that files rounded to canonical precision
    still load.
    """

    root_translation: np.ndarray  # (T, 3)
    rotations: np.ndarray  # (T, J, 3, 3)

    def __post_init__(self):
        object.__setattr__(self, "root_translation", _frozen(self.root_translation))
        object.__setattr__(self, "rotations", _frozen(self.rotations))
        t = self.root_translation.shape[0]
        if self.root_translation.shape != (t, 3):
            raise ValidationError("root_translation must be (T, 3)")
        r = self.rotations
        if r.ndim != 4 or r.shape[0] != t or r.shape[2:] != (3, 3):
            raise ValidationError(f"rotations must be (T, J, 3, 3), got {r.shape}")
        if t < 1:
            raise ValidationError("motion needs at least one frame")
        if not (np.isfinite(r).all() and np.isfinite(self.root_translation).all()):
            raise ValidationError("motion entries must be finite")

    @property
    def n_frames(self):
        return self.rotations.shape[0]

    @property
    def n_joints(self):
        return self.rotations.shape[1]


def forward_kinematics(motion, skeleton):
    """Global joint positions for every frame.

    The chain is accumulated with the root at the origin and the root
    translation is added once at the end, so translating a motion translates
    every joint by exactly the same vector.

    Returns
    -------
    (T, J, 3) ndarray
    """
    if motion.n_joints != skeleton.n_joints:
        raise ValidationError(
            f"motion has {motion.n_joints} joints, skeleton {skeleton.n_joints}"
        )
    t, j = motion.n_frames, motion.n_joints
    rel = np.zeros((t, j, 3))
    glob_rot = np.empty((t, j, 3, 3))
    glob_rot[:, 0] = motion.rotations[:, 0]
    for i in range(1, j):
        p = skeleton.parents[i]
        rel[:, i] = rel[:, p] + np.matmul(
            glob_rot[:, p], skeleton.offsets[i]
        )
        glob_rot[:, i] = np.matmul(glob_rot[:, p], motion.rotations[:, i])
    return rel + motion.root_translation[:, None, :]


def global_rotations(motion, skeleton):
    """Global (accumulated) rotation of every joint, (T, J, 3, 3)."""
    t, j = motion.n_frames, motion.n_joints
    out = np.empty((t, j, 3, 3))
    out[:, 0] = motion.rotations[:, 0]
    for i in range(1, j):
        out[:, i] = np.matmul(out[:, skeleton.parents[i]], motion.rotations[:, i])
    return out


# -- JSON round-trip -------------------------------------------------------


def _skeleton_to_joints(skeleton):
    return [
        {
            "name": skeleton.joint_names[i],
            "parent": int(skeleton.parents[i]),
            "offset": [float(c) for c in skeleton.offsets[i]],
        }
        for i in range(skeleton.n_joints)
    ]


def _skeleton_from_joints(joints):
    if not joints:
        raise ValidationError("document has no joints")
    return Skeleton(
        joint_names=[j["name"] for j in joints],
        parents=[j["parent"] for j in joints],
        offsets=[j["offset"] for j in joints],
    )


def motion_to_dict(motion, skeleton):
    frames = []
    for t in range(motion.n_frames):
        frames.append(
            {
                "root_t": [float(c) for c in motion.root_translation[t]],
                "rotations": [
                    [float(c) for c in motion.rotations[t, j].reshape(9)]
                    for j in range(motion.n_joints)
                ],
            }
        )
    return {"joints": _skeleton_to_joints(skeleton), "frames": frames}


def motion_from_dict(doc):
    skeleton = _skeleton_from_joints(doc.get("joints", []))
    frames = doc.get("frames", [])
    if not frames:
        raise ValidationError("document has no motion frames")
    j = skeleton.n_joints
    t = len(frames)
    root_t = np.empty((t, 3))
    rot = np.empty((t, j, 3, 3))
    for ti, fr in enumerate(frames):
        root_t[ti] = fr["root_t"]
        rows = fr["rotations"]
        if len(rows) != j:
            raise ValidationError(f"frame {ti} has {len(rows)} rotations, expected {j}")
        for ji, nine in enumerate(rows):
            rot[ti, ji] = np.asarray(nine, dtype=float).reshape(3, 3)
    return Motion(root_t, rot), skeleton


def save_motion(motion, skeleton, path):
    dump_json(motion_to_dict(motion, skeleton), path)


def load_motion(path):
    return motion_from_dict(load_json(path))


def save_skeleton(skeleton, path):
    dump_json({"joints": _skeleton_to_joints(skeleton), "frames": []}, path)


def load_skeleton(path):
    return _skeleton_from_joints(load_json(path).get("joints", []))


# -- BVH export ------------------------------------------------------------


def _bvh_euler_zxy(rotations):
    """Decompose local rotations into intrinsic Z-X-Y Euler degrees."""
    flat = rotations.reshape(-1, 3, 3)
    return Rotation.from_matrix(flat).as_euler("ZXY", degrees=True).reshape(
        rotations.shape[0], rotations.shape[1], 3
    )


def export_bvh(motion, skeleton, path, frame_rate=120.0):
    """Write a BVH file with ZXY rotation channels.

    The root gets six channels (translation + rotation), every other joint
    three. Leaf joints receive zero-length end sites. Values are written with
    six decimals so identical motions export byte-identically.
    """
    lines = ["HIERARCHY"]

    def fmt(v):
        return " ".join(f"{c:.6f}" for c in v)

    def emit(j, indent):
        pad = "  " * indent
        tag = "ROOT" if j == 0 else "JOINT"
        lines.append(f"{pad}{tag} {skeleton.joint_names[j]}")
        lines.append(pad + "{")
        lines.append(f"{pad}  OFFSET {fmt(skeleton.offsets[j])}")
        if j == 0:
            lines.append(
                f"{pad}  CHANNELS 6 Xposition Yposition Zposition "
                "Zrotation Xrotation Yrotation"
            )
        else:
            lines.append(f"{pad}  CHANNELS 3 Zrotation Xrotation Yrotation")
        kids = skeleton.children(j)
        if not kids:
            lines.append(f"{pad}  End Site")
            lines.append(pad + "  {")
            lines.append(f"{pad}    OFFSET 0.000000 0.000000 0.000000")
            lines.append(pad + "  }")
        for k in kids:
            emit(k, indent + 1)
        lines.append(pad + "}")

    emit(0, 0)
    euler = _bvh_euler_zxy(motion.rotations)
    lines.append("MOTION")
    lines.append(f"Frames: {motion.n_frames}")
    lines.append(f"Frame Time: {1.0 / frame_rate:.8f}")
    for t in range(motion.n_frames):
        vals = list(motion.root_translation[t])
        for j in range(skeleton.n_joints):
            vals.extend(euler[t, j])
        lines.append(fmt(vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
