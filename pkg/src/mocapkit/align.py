"""Global-transform removal via reference-marker frames.

A reference frame is built per frame from a fixed set of reference markers
(waist markers for the body, wrist markers for a hand): origin at their
centroid, x along the first-to-second marker, z perpendicular to the plane
spanned with the third, y completing the right-handed basis. Positions are
expressed in that frame for cleaning and solving, then mapped back.

Frames where any reference marker is occluded are bridged by interpolating
between the nearest valid frames: spherical-linear for the axes, linear for
the origin. Runs touching the sequence boundary hold the nearest valid
frame.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .errors import DegenerateInputError, ValidationError
from .sequence import STREAMS, _frozen
from .skeleton import Motion


@dataclass(frozen=True)
class ReferenceFrame:
    origin: np.ndarray  # (3,)
    axes: np.ndarray  # (3, 3), columns are the x/y/z unit axes

    def __post_init__(self):
        object.__setattr__(self, "origin", _frozen(self.origin))
        object.__setattr__(self, "axes", _frozen(self.axes))

    def to_local(self, p):
        return (np.asarray(p, float) - self.origin) @ self.axes

    def from_local(self, p):
        return np.asarray(p, float) @ self.axes.T + self.origin


@dataclass(frozen=True)
class FrameSeries:
    """Per-frame reference frames plus which were built from observations."""

    origins: np.ndarray  # (T, 3)
    axes: np.ndarray  # (T, 3, 3)
    direct: np.ndarray  # (T,) bool, False where interpolated

    def __post_init__(self):
        object.__setattr__(self, "origins", _frozen(self.origins))
        object.__setattr__(self, "axes", _frozen(self.axes))
        object.__setattr__(self, "direct", _frozen(self.direct, bool))

    def frame(self, t):
        return ReferenceFrame(self.origins[t], self.axes[t])


# which part label supplies the reference markers for each stream
REF_LABELS = {
    "body": "waist_ref",
    "left_hand": "wrist_ref_left",
    "right_hand": "wrist_ref_right",
}


def reference_marker_names(seq, stream):
    """The sequence's reference markers for a stream, by part label."""
    if stream not in REF_LABELS:
        raise ValidationError(f"unknown stream {stream!r}")
    lab = REF_LABELS[stream]
    names = [n for n, l in zip(seq.marker_names, seq.part_labels) if l == lab]
    if len(names) < 3:
        raise ValidationError(
            f"stream {stream!r} needs at least three {lab!r} markers, found {len(names)}"
        )
    return names


def compute_reference_frame(ref_positions):
    """Build one reference frame from at least three marker positions.

    Origin is the centroid of all of them; the axes use only the first
    three: x = normalize(m2 - m1), z = normalize(x cross (m3 - m1)),
    y = z cross x.
    """
    pts = np.asarray(ref_positions, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 3:
        raise ValidationError("need at least three reference positions")
    origin = pts.mean(axis=0)
    v1 = pts[1] - pts[0]
    n1 = np.linalg.norm(v1)
    scale = max(1.0, float(np.abs(pts).max()))
    if n1 < 1e-9 * scale:
        raise DegenerateInputError("first two reference markers coincide")
    x = v1 / n1
    v2 = pts[2] - pts[0]
    zraw = np.cross(x, v2)
    n2 = np.linalg.norm(zraw)
    if n2 < 1e-9 * scale:
        raise DegenerateInputError("reference markers are collinear")
    z = zraw / n2
    y = np.cross(z, x)
    return ReferenceFrame(origin, np.column_stack([x, y, z]))


def reference_frames(seq, ref_names):
    """Reference frame for every frame of the sequence.

    Frames where any reference marker is occluded are interpolated (slerp on
    the axes, lerp on the origin) between the nearest frames where all are
    visible; boundary runs hold the nearest valid frame.
    """
    idx = [seq.marker_index(n) for n in ref_names]
    if len(idx) < 3:
        raise ValidationError("need at least three reference markers")
    t = seq.n_frames
    vis = seq.visible[:, idx].all(axis=1)
    valid = np.flatnonzero(vis)
    if valid.size == 0:
        raise ValidationError("reference markers are never simultaneously visible")
    origins = np.full((t, 3), np.nan)
    axes = np.full((t, 3, 3), np.nan)
    for f in valid:
        frame = compute_reference_frame(seq.positions[f, idx])
        origins[f] = frame.origin
        axes[f] = frame.axes
    if valid.size < t:
        direct_axes = axes[valid].copy()
        slerp = Slerp(valid.astype(float), Rotation.from_matrix(direct_axes))
        query = np.clip(np.arange(t, dtype=float), valid[0], valid[-1])
        axes = slerp(query).as_matrix()
        axes[valid] = direct_axes
        for c in range(3):
            origins[:, c] = np.interp(np.arange(t), valid, origins[valid, c])
    return FrameSeries(origins, axes, vis)


def to_local(seq, series):
    """Express all marker positions in the per-frame reference frames."""
    rel = seq.positions - series.origins[:, None, :]
    local = np.einsum("tji,tmj->tmi", series.axes, rel)
    return seq.with_positions(local)


def from_local(seq, series):
    """Inverse of :func:`to_local`."""
    world = np.einsum("tij,tmj->tmi", series.axes, seq.positions)
    return seq.with_positions(world + series.origins[:, None, :])


def motion_to_local(motion, series):
    """Express root translation and root rotation in the reference frames.

    Non-root rotations are parent-relative and unaffected.
    """
    rot = np.array(motion.rotations)
    rot[:, 0] = np.einsum("tji,tjk->tik", series.axes, rot[:, 0])
    rel = motion.root_translation - series.origins
    trans = np.einsum("tji,tj->ti", series.axes, rel)
    return Motion(trans, rot)


def motion_from_local(motion, series):
    rot = np.array(motion.rotations)
    rot[:, 0] = np.einsum("tij,tjk->tik", series.axes, rot[:, 0])
    trans = np.einsum("tij,tj->ti", series.axes, motion.root_translation)
    return Motion(trans + series.origins, rot)


def split_streams(seq):
    """Split a full sequence into body/left-hand/right-hand streams.

    Wrist reference markers are duplicated into the body stream and into
    their hand's stream. Streams with no markers are omitted.
    """
    out = {}
    for stream in STREAMS:
        idx = seq.stream_indices(stream)
        if idx:
            out[stream] = (seq.select_markers(idx), idx)
    return out


def merge_streams(seq, parts):
    """Write per-stream positions back into a full-size sequence.

    ``parts`` maps stream name -> (stream sequence, original indices), as
    produced by :func:`split_streams` (after processing). Markers present in
    several streams take the body-stream values.
    """
    pos = np.array(seq.positions)
    vis = np.array(seq.visibility)
    # later writes win; iterate hands first so body overrides duplicates
    order = [s for s in ("left_hand", "right_hand", "body") if s in parts]
    for stream in order:
        sub, idx = parts[stream]
        if sub.n_frames != seq.n_frames or sub.n_markers != len(idx):
            raise ValidationError(f"stream {stream!r} shape mismatch on merge")
        pos[:, idx] = sub.positions
        vis[:, idx] = sub.visibility
    return seq.with_positions(pos, vis)
