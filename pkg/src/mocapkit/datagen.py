"""Synthetic skeletons, motions, and marker data with known ground truth.

Joint rotations follow per-axis sinusoid programs (amplitude in degrees,
frequency in Hz, phase in radians) composed in fixed X-then-Y-then-Z order;
the root translation follows the same kind of program in cm. Markers ride
rigidly on their parent joints, optionally with uniform jitter to break
exact rigidity. Everything is a pure function of the spec and the seed.
"""

import os
from dataclasses import dataclass, replace

import numpy as np

from . import augment
from .errors import ValidationError
from .rotation import rot_x, rot_y, rot_z
from .sequence import MarkerLayout, MarkerSequence, save_sequence
from .serialize import dump_json, load_json
from .skeleton import (
    Motion,
    Skeleton,
    forward_kinematics,
    global_rotations,
    save_motion,
)


@dataclass(frozen=True)
class AxisProgram:
    """Sinusoid per axis: value(t) = amp * sin(2*pi*freq*t/rate + phase)."""

    amplitude: tuple  # (3,)
    frequency: tuple  # (3,) Hz
    phase: tuple  # (3,) radians

    def sample(self, frames, frame_rate):
        t = np.asarray(frames, dtype=float)[:, None] / frame_rate
        amp = np.asarray(self.amplitude, dtype=float)
        freq = np.asarray(self.frequency, dtype=float)
        phase = np.asarray(self.phase, dtype=float)
        return amp * np.sin(2.0 * np.pi * freq * t + phase)


STILL = AxisProgram((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))


@dataclass(frozen=True)
class SynthSpec:
    """Complete recipe for a synthetic capture."""

    skeleton: Skeleton
    layout: MarkerLayout
    joint_programs: tuple  # one AxisProgram (degrees) per joint
    root_program: AxisProgram  # cm
    frame_rate: float = 120.0

    def __post_init__(self):
        if len(self.joint_programs) != self.skeleton.n_joints:
            raise ValidationError("need one joint program per joint")


def synth_motion(spec, n_frames):
    """Sample the rotation programs into a Motion."""
    if n_frames < 1:
        raise ValidationError("n_frames must be >= 1")
    frames = np.arange(n_frames)
    j = spec.skeleton.n_joints
    rot = np.empty((n_frames, j, 3, 3))
    for ji, prog in enumerate(spec.joint_programs):
        angles = prog.sample(frames, spec.frame_rate)  # (T, 3) degrees
        for t in range(n_frames):
            ax, ay, az = angles[t]
            rot[t, ji] = rot_z(az) @ rot_y(ay) @ rot_x(ax)
    trans = spec.root_program.sample(frames, spec.frame_rate)
    return Motion(trans, rot)


def attach_markers(spec, motion, jitter=0.0, seed=0):
    """Marker positions riding on the animated skeleton, fully visible.

    ``jitter`` adds per-frame uniform noise in [-jitter, jitter] cm per
    coordinate, breaking exact rigidity by a controlled amount.
    """
    skel, layout = spec.skeleton, spec.layout
    grot = global_rotations(motion, skel)
    jpos = forward_kinematics(motion, skel)
    parents = layout.parent_joints
    pos = jpos[:, parents] + np.einsum(
        "tmij,mj->tmi", grot[:, parents], layout.local_offsets
    )
    if jitter > 0:
        rng = np.random.default_rng([seed, 3])
        pos = pos + rng.uniform(-jitter, jitter, size=pos.shape)
    vis = np.ones(pos.shape[:2], dtype=np.int8)
    return MarkerSequence(
        spec.frame_rate, layout.marker_names, layout.part_labels, pos, vis
    )


# -- default rigs ----------------------------------------------------------


def _mirror(offset):
    x, y, z = offset
    return (-x, y, z)


_BODY_JOINTS = [
    ("pelvis", -1, (0.0, 0.0, 0.0)),
    ("spine1", 0, (0.0, 10.0, 0.0)),
    ("spine2", 1, (0.0, 11.0, 0.0)),
    ("spine3", 2, (0.0, 12.0, 0.0)),
    ("head", 3, (0.0, 16.0, 0.0)),
    ("r_shoulder", 3, (17.0, 3.0, 0.0)),
    ("r_elbow", 5, (27.0, 0.0, 0.0)),
    ("r_wrist", 6, (25.0, 0.0, 0.0)),
    ("l_shoulder", 3, (-17.0, 3.0, 0.0)),
    ("l_elbow", 8, (-27.0, 0.0, 0.0)),
    ("l_wrist", 9, (-25.0, 0.0, 0.0)),
    ("r_hip", 0, (9.0, -6.0, 0.0)),
    ("r_knee", 11, (0.0, -41.0, 0.0)),
    ("l_hip", 0, (-9.0, -6.0, 0.0)),
    ("l_knee", 13, (0.0, -41.0, 0.0)),
]

# name, label, parent joint name, offset (right side; left mirrors)
_BODY_MARKERS = [
    ("WAIST_FR", "waist_ref", "pelvis", (12.0, 2.0, 9.0)),
    ("WAIST_FL", "waist_ref", "pelvis", (-12.0, 2.0, 9.0)),
    ("WAIST_BR", "waist_ref", "pelvis", (11.0, 3.0, -9.0)),
    ("WAIST_BL", "waist_ref", "pelvis", (-11.0, 3.0, -9.0)),
    ("SACR", "body", "pelvis", (0.0, 4.0, -12.0)),
    ("HEAD_F", "body", "head", (0.0, 8.0, 9.0)),
    ("HEAD_B", "body", "head", (0.0, 8.0, -9.0)),
    ("HEAD_T", "body", "head", (0.0, 14.0, 0.0)),
    ("C7", "body", "spine3", (0.0, 10.0, -7.0)),
    ("CHEST", "body", "spine3", (0.0, 2.0, 9.0)),
    ("RCLA", "body", "spine3", (7.0, 8.0, 5.0)),
    ("LCLA", "body", "spine3", (-7.0, 8.0, 5.0)),
    ("STERN", "body", "spine2", (0.0, 4.0, 10.0)),
    ("T10", "body", "spine2", (0.0, 0.0, -9.0)),
    ("RSHO", "body", "r_shoulder", (2.0, 5.0, 0.0)),
    ("LSHO", "body", "l_shoulder", (-2.0, 5.0, 0.0)),
    ("RUPA", "body", "r_shoulder", (14.0, -2.0, 3.0)),
    ("LUPA", "body", "l_shoulder", (-14.0, -2.0, 3.0)),
    ("RELB", "body", "r_elbow", (2.0, 0.0, -4.0)),
    ("LELB", "body", "l_elbow", (-2.0, 0.0, -4.0)),
    ("RFRM", "body", "r_elbow", (14.0, 1.0, 3.0)),
    ("LFRM", "body", "l_elbow", (-14.0, 1.0, 3.0)),
    ("RWRA", "wrist_ref_right", "r_wrist", (1.0, 2.0, 3.0)),
    ("RWRB", "wrist_ref_right", "r_wrist", (1.0, 2.0, -3.0)),
    ("RWRC", "wrist_ref_right", "r_wrist", (4.0, -2.0, 0.0)),
    ("LWRA", "wrist_ref_left", "l_wrist", (-1.0, 2.0, 3.0)),
    ("LWRB", "wrist_ref_left", "l_wrist", (-1.0, 2.0, -3.0)),
    ("LWRC", "wrist_ref_left", "l_wrist", (-4.0, -2.0, 0.0)),
    ("RFIN", "body", "r_wrist", (9.0, -1.0, 1.0)),
    ("LFIN", "body", "l_wrist", (-9.0, -1.0, 1.0)),
    ("RTHI", "body", "r_hip", (6.0, -18.0, 6.0)),
    ("LTHI", "body", "l_hip", (-6.0, -18.0, 6.0)),
    ("RKNE", "body", "r_knee", (5.0, 0.0, 2.0)),
    ("LKNE", "body", "l_knee", (-5.0, 0.0, 2.0)),
    ("RSHN", "body", "r_knee", (2.0, -18.0, 6.0)),
    ("LSHN", "body", "l_knee", (-2.0, -18.0, 6.0)),
    ("RANK", "body", "r_knee", (1.0, -39.0, 1.0)),
    ("LANK", "body", "l_knee", (-1.0, -39.0, 1.0)),
    ("RTOE", "body", "r_knee", (0.0, -43.0, 12.0)),
    ("LTOE", "body", "l_knee", (0.0, -43.0, 12.0)),
]


def _build_rig(joints, markers):
    names = [j[0] for j in joints]
    skel = Skeleton(
        joint_names=names,
        parents=[j[1] for j in joints],
        offsets=[j[2] for j in joints],
    )
    layout = MarkerLayout(
        marker_names=[m[0] for m in markers],
        part_labels=[m[1] for m in markers],
        parent_joints=[names.index(m[2]) for m in markers],
        local_offsets=[m[3] for m in markers],
    )
    return skel, layout


def _random_programs(rng, n_joints, amp_range, freq_range, root_amp):
    programs = []
    for _ in range(n_joints):
        programs.append(
            AxisProgram(
                amplitude=tuple(rng.uniform(*amp_range, size=3)),
                frequency=tuple(rng.uniform(*freq_range, size=3)),
                phase=tuple(rng.uniform(0.0, 2.0 * np.pi, size=3)),
            )
        )
    root = AxisProgram(
        amplitude=tuple(root_amp),
        frequency=tuple(rng.uniform(0.1, 0.4, size=3)),
        phase=tuple(rng.uniform(0.0, 2.0 * np.pi, size=3)),
    )
    return tuple(programs), root


def default_body_spec(seed=0, amp_range=(6.0, 24.0), freq_range=(0.2, 1.0),
                      root_amp=(15.0, 4.0, 20.0), frame_rate=120.0):
    """Default 15-joint, 40-marker body rig with seeded motion programs."""
    skel, layout = _build_rig(_BODY_JOINTS, _BODY_MARKERS)
    rng = np.random.default_rng([seed, 0])
    programs, root = _random_programs(rng, skel.n_joints, amp_range, freq_range, root_amp)
    # keep the root joint tame so the reference markers stay well conditioned
    programs = (AxisProgram(
        amplitude=tuple(rng.uniform(2.0, 8.0, size=3)),
        frequency=tuple(rng.uniform(0.1, 0.4, size=3)),
        phase=tuple(rng.uniform(0.0, 2.0 * np.pi, size=3)),
    ),) + programs[1:]
    return SynthSpec(skel, layout, programs, root, frame_rate)


def _hand_rig(side):
    sgn = -1.0 if side == "left" else 1.0
    lab = "left_hand" if side == "left" else "right_hand"
    wlab = "wrist_ref_left" if side == "left" else "wrist_ref_right"
    p = "l" if side == "left" else "r"
    joints = [(f"{p}hand_wrist", -1, (0.0, 0.0, 0.0))]
    fingers = [
        ("thumb", (2.5, -1.0, 3.0)),
        ("index", (9.0, 0.0, 2.5)),
        ("middle", (9.5, 0.0, 0.5)),
        ("ring", (9.0, 0.0, -1.5)),
        ("pinky", (8.0, 0.0, -3.0)),
    ]
    markers = [
        (f"{p.upper()}WR_A", wlab, f"{p}hand_wrist", (sgn * 0.5, 1.5, 2.5)),
        (f"{p.upper()}WR_B", wlab, f"{p}hand_wrist", (sgn * 0.5, 1.5, -2.5)),
        (f"{p.upper()}WR_C", wlab, f"{p}hand_wrist", (sgn * 2.5, -1.5, 0.0)),
        (f"{p.upper()}WR_D", wlab, f"{p}hand_wrist", (sgn * -1.5, -1.0, 0.0)),
    ]
    for fname, base in fingers:
        parent = 0
        seg = (sgn * 3.5, 0.0, 0.0)
        for k in range(3):
            jname = f"{p}{fname}{k + 1}"
            offset = (sgn * base[0], base[1], base[2]) if k == 0 else seg
            joints.append((jname, parent, offset))
            parent = len(joints) - 1
            markers.append(
                (f"{p.upper()}{fname.upper()}{k + 1}", lab, jname, (sgn * 1.2, 0.8, 0.0))
            )
    return _build_rig(joints, markers)


def default_hand_spec(side="left", seed=0, frame_rate=120.0):
    """Default 16-joint, 19-marker hand rig (wrist + 5 fingers x 3)."""
    if side not in ("left", "right"):
        raise ValidationError("side must be 'left' or 'right'")
    skel, layout = _hand_rig(side)
    rng = np.random.default_rng([seed, 1 if side == "left" else 2])
    programs = [STILL]  # wrist root driven by the body in real data
    for _ in range(1, skel.n_joints):
        programs.append(
            AxisProgram(
                amplitude=(0.0, 0.0, float(rng.uniform(10.0, 45.0))),
                frequency=(0.0, 0.0, float(rng.uniform(0.3, 1.2))),
                phase=(0.0, 0.0, float(rng.uniform(0.0, 2.0 * np.pi))),
            )
        )
    root = AxisProgram((4.0, 3.0, 5.0), (0.2, 0.3, 0.25), (0.0, 1.0, 2.0))
    return SynthSpec(skel, layout, tuple(programs), root, frame_rate)


def vary_spec(spec, rng):
    """Shift every program's phases so sequences differ but stay in family."""
    programs = tuple(
        replace(p, phase=tuple(np.asarray(p.phase) + rng.uniform(0, 2 * np.pi, 3)))
        for p in spec.joint_programs
    )
    root = replace(
        spec.root_program,
        phase=tuple(np.asarray(spec.root_program.phase) + rng.uniform(0, 2 * np.pi, 3)),
    )
    return replace(spec, joint_programs=programs, root_program=root)


def make_fixture(spec, n_frames, jitter=0.0, seed=0):
    """(sequence, motion, skeleton) triple for one clean capture."""
    motion = synth_motion(spec, n_frames)
    seq = attach_markers(spec, motion, jitter=jitter, seed=seed)
    return seq, motion, spec.skeleton


def save_rig(skeleton, layout, path):
    """Write a skeleton plus its marker layout as one JSON document."""
    doc = {
        "joints": [
            {
                "name": skeleton.joint_names[i],
                "parent": int(skeleton.parents[i]),
                "offset": [float(v) for v in skeleton.offsets[i]],
            }
            for i in range(skeleton.n_joints)
        ],
        "markers": [
            {
                "name": layout.marker_names[i],
                "label": layout.part_labels[i],
                "parent": int(layout.parent_joints[i]),
                "offset": [float(v) for v in layout.local_offsets[i]],
            }
            for i in range(layout.n_markers)
        ],
    }
    dump_json(doc, path)


def load_rig(path):
    """Read a rig file back into a (Skeleton, MarkerLayout) pair."""
    doc = load_json(path)
    joints = doc["joints"]
    skel = Skeleton(
        joint_names=[j["name"] for j in joints],
        parents=[j["parent"] for j in joints],
        offsets=[j["offset"] for j in joints],
    )
    markers = doc["markers"]
    layout = MarkerLayout(
        marker_names=[m["name"] for m in markers],
        part_labels=[m["label"] for m in markers],
        parent_joints=[m["parent"] for m in markers],
        local_offsets=[m["offset"] for m in markers],
    )
    return skel, layout


DEFAULT_GAP_HIST = ((2, 0.35), (5, 0.3), (10, 0.2), (20, 0.1), (40, 0.05))


def default_target_stats(n_markers):
    """A plausible corruption profile when no corpus is available."""
    lengths = tuple(l for l, _ in DEFAULT_GAP_HIST)
    probs = tuple(p for _, p in DEFAULT_GAP_HIST)
    return augment.OcclusionStats((0.05,) * n_markers, lengths, probs)


def generate_dataset(
    out_dir,
    count,
    n_frames,
    seed,
    spec=None,
    stats=None,
    occlusion_budget=None,
    p_shift=augment.DEFAULT_P_SHIFT,
    sigma_shift=augment.DEFAULT_SIGMA_SHIFT,
    jitter=0.0,
):
    """Write paired (clean, corrupted, mask, motion) sequences + manifest.

    ``occlusion_budget`` is the total gap budget as a fraction of one marker
    track; the default gives every marker roughly a 5% occlusion rate.
    Returns the manifest dict (also written to ``manifest.json``).
    """
    if spec is None:
        spec = default_body_spec(seed=seed)
    if stats is None:
        stats = default_target_stats(spec.layout.n_markers)
    if occlusion_budget is None:
        occlusion_budget = min(1.0, 0.05 * spec.layout.n_markers)
    os.makedirs(out_dir, exist_ok=True)
    save_rig(spec.skeleton, spec.layout, os.path.join(out_dir, "rig.json"))
    entries = []
    for i in range(count):
        seq_seed = int(np.random.default_rng([seed, i, 100]).integers(0, 2**31))
        var = vary_spec(spec, np.random.default_rng([seed, i, 101]))
        seq, motion, skel = make_fixture(var, n_frames, jitter=jitter, seed=seq_seed)
        result = augment.corrupt_sequence(
            seq, stats, occlusion_budget, p_shift, sigma_shift, seed=seq_seed
        )
        sid = f"seq_{i:03d}"
        files = {
            "clean": f"{sid}_clean.json",
            "corrupted": f"{sid}_corrupted.json",
            "mask": f"{sid}_mask.json",
            "motion": f"{sid}_motion.json",
        }
        save_sequence(seq, os.path.join(out_dir, files["clean"]))
        save_sequence(result.sequence, os.path.join(out_dir, files["corrupted"]))
        dump_json(
            {
                "mask": result.occlusion_mask.astype(int).tolist(),
                "shift_mask": result.shift_mask.astype(int).tolist(),
            },
            os.path.join(out_dir, files["mask"]),
        )
        save_motion(motion, skel, os.path.join(out_dir, files["motion"]))
        entries.append({"id": sid, "seed": seq_seed, **files})
    manifest = {
        "count": count,
        "n_frames": n_frames,
        "seed": seed,
        "frame_rate": spec.frame_rate,
        "occlusion_budget": occlusion_budget,
        "p_shift": p_shift,
        "sigma_shift": sigma_shift,
        "jitter": jitter,
        "rig": "rig.json",
        "sequences": entries,
    }
    dump_json(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest
