"""Marker sequence and marker layout types plus their JSON round-trip.

A sequence stores positions in centimeters, one row of markers per frame,
with a binary visibility channel. Positions at occluded entries are carried
(for provenance and synthetic ground truth) but must never be trusted by
consumers; they may be NaN.

File schema::

    {
      "frame_rate": 120.0,
      "marker_names": ["LFWT", ...],
      "part_labels": ["body", ...],
      "frames": [[{"p": [x, y, z], "v": 1}, ...], ...]
    }

``p`` components may be null when ``v`` is 0.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .serialize import dump_json, load_json

PART_LABELS = (
    "body",
    "left_hand",
    "right_hand",
    "waist_ref",
    "wrist_ref_left",
    "wrist_ref_right",
)

# Stream membership: cleaning and solving operate on these three groups.
# Wrist reference markers belong to the body stream and to their hand stream.
STREAMS = {
    "body": ("body", "waist_ref", "wrist_ref_left", "wrist_ref_right"),
    "left_hand": ("left_hand", "wrist_ref_left"),
    "right_hand": ("right_hand", "wrist_ref_right"),
}


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MarkerSequence:
    """Immutable marker time series.

    Attributes
    ----------
    frame_rate : float
        Frames per second, > 0.
    marker_names : tuple of str
    part_labels : tuple of str
        One label per marker, drawn from :data:`PART_LABELS`.
    positions : (T, M, 3) ndarray, read-only
    visibility : (T, M) int8 ndarray, read-only
        1 where the marker was observed, 0 where occluded.
    """

    frame_rate: float
    marker_names: tuple
    part_labels: tuple
    positions: np.ndarray
    visibility: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "marker_names", tuple(self.marker_names))
        object.__setattr__(self, "part_labels", tuple(self.part_labels))
        object.__setattr__(self, "positions", _frozen(self.positions))
        object.__setattr__(self, "visibility", _frozen(self.visibility, np.int8))
        self._validate()

    def _validate(self):
        if not self.frame_rate > 0:
            raise ValidationError(f"frame_rate must be > 0, got {self.frame_rate}")
        pos, vis = self.positions, self.visibility
        if pos.ndim != 3 or pos.shape[2] != 3:
            raise ValidationError(f"positions must be (T, M, 3), got {pos.shape}")
        t, m = pos.shape[:2]
        if t < 1 or m < 1:
            raise ValidationError("need at least one frame and one marker")
        if vis.shape != (t, m):
            raise ValidationError(
                f"visibility shape {vis.shape} does not match positions {pos.shape}"
            )
        if len(self.marker_names) != m or len(self.part_labels) != m:
            raise ValidationError("marker_names/part_labels length must equal M")
        if len(set(self.marker_names)) != m:
            raise ValidationError("marker names must be unique")
        bad = set(self.part_labels) - set(PART_LABELS)
        if bad:
            raise ValidationError(f"unknown part labels: {sorted(bad)}")
        if not np.isin(vis, (0, 1)).all():
            raise ValidationError("visibility must be 0 or 1")
        visible = vis.astype(bool)
        if not np.isfinite(pos[visible]).all():
            raise ValidationError("visible markers must have finite positions")

    # -- convenience -------------------------------------------------------

    @property
    def n_frames(self):
        return self.positions.shape[0]

    @property
    def n_markers(self):
        return self.positions.shape[1]

    @property
    def visible(self):
        """Boolean (T, M) view of the visibility channel."""
        return self.visibility.astype(bool)

    def marker_index(self, name):
        try:
            return self.marker_names.index(name)
        except ValueError:
            raise ValidationError(f"unknown marker name {name!r}") from None

    def with_positions(self, positions, visibility=None):
        """Functional update; arrays are copied and re-validated."""
        vis = self.visibility if visibility is None else visibility
        return replace(self, positions=positions, visibility=vis)

    def select_markers(self, indices):
        """Sub-sequence containing the given markers, in the given order."""
        idx = list(indices)
        return MarkerSequence(
            frame_rate=self.frame_rate,
            marker_names=[self.marker_names[i] for i in idx],
            part_labels=[self.part_labels[i] for i in idx],
            positions=self.positions[:, idx],
            visibility=self.visibility[:, idx],
        )

    def stream_indices(self, stream):
        """Marker indices belonging to one of the three streams."""
        if stream not in STREAMS:
            raise ValidationError(f"unknown stream {stream!r}")
        labels = STREAMS[stream]
        return [i for i, lab in enumerate(self.part_labels) if lab in labels]


@dataclass(frozen=True)
class MarkerLayout:
    """Static marker placement: which joint each marker rides on and where.

    ``local_offsets`` are expressed in the parent joint's rest frame (cm).
    """

    marker_names: tuple
    part_labels: tuple
    parent_joints: np.ndarray  # (M,) joint indices
    local_offsets: np.ndarray  # (M, 3)

    def __post_init__(self):
        object.__setattr__(self, "marker_names", tuple(self.marker_names))
        object.__setattr__(self, "part_labels", tuple(self.part_labels))
        object.__setattr__(self, "parent_joints", _frozen(self.parent_joints, int))
        object.__setattr__(self, "local_offsets", _frozen(self.local_offsets))
        m = len(self.marker_names)
        if not (
            len(self.part_labels) == m
            and self.parent_joints.shape == (m,)
            and self.local_offsets.shape == (m, 3)
        ):
            raise ValidationError("layout field lengths disagree")
        bad = set(self.part_labels) - set(PART_LABELS)
        if bad:
            raise ValidationError(f"unknown part labels: {sorted(bad)}")

    @property
    def n_markers(self):
        return len(self.marker_names)

    def tpose_positions(self, skeleton):
        """Marker positions with every joint at its rest rotation."""
        joints = skeleton.tpose_positions()
        return joints[self.parent_joints] + self.local_offsets


# -- JSON round-trip -------------------------------------------------------


def sequence_to_dict(seq):
    frames = []
    vis = seq.visibility
    pos = seq.positions
    for t in range(seq.n_frames):
        row = []
        for i in range(seq.n_markers):
            p = pos[t, i]
            row.append({"p": [float(p[0]), float(p[1]), float(p[2])], "v": int(vis[t, i])})
        frames.append(row)
    return {
        "frame_rate": float(seq.frame_rate),
        "marker_names": list(seq.marker_names),
        "part_labels": list(seq.part_labels),
        "frames": frames,
    }


def sequence_from_dict(doc):
    try:
        names = doc["marker_names"]
        labels = doc["part_labels"]
        frames = doc["frames"]
        rate = doc["frame_rate"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed sequence document: missing {exc}") from None
    if not frames:
        raise ValidationError("sequence has no frames")
    t, m = len(frames), len(names)
    pos = np.full((t, m, 3), np.nan)
    vis = np.zeros((t, m), dtype=np.int8)
    for ti, row in enumerate(frames):
        if len(row) != m:
            raise ValidationError(f"frame {ti} has {len(row)} markers, expected {m}")
        for mi, cell in enumerate(row):
            p, v = cell["p"], cell["v"]
            pos[ti, mi] = [np.nan if c is None else float(c) for c in p]
            vis[ti, mi] = v
    return MarkerSequence(rate, names, labels, pos, vis)


def save_sequence(seq, path):
    dump_json(sequence_to_dict(seq), path)


def load_sequence(path):
    return sequence_from_dict(load_json(path))
