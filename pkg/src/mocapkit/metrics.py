"""Evaluation metrics: marker position error, joint angle and position error.

All three are plain means over their defined entries, in cm or degrees.
"""

import numpy as np

from .errors import ValidationError
from .skeleton import forward_kinematics


def _geodesic_deg(r1, r2):
    # trace(r1.T @ r2) equals the elementwise product sum
    cos = (np.sum(r1 * r2, axis=(-2, -1)) - 1.0) / 2.0
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def metric_ompe(estimate, truth, mask):
    """Occluded-marker position error: mean distance over masked entries.

    Parameters
    ----------
    estimate, truth : (T, M, 3) ndarray
    mask : (T, M) bool ndarray
        True at entries that were occluded and therefore estimated.

    Returns
    -------
    float
        Mean Euclidean distance in cm; 0.0 when the mask is empty.
    """
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if estimate.shape != truth.shape or mask.shape != estimate.shape[:2]:
        raise ValidationError("metric_ompe shapes disagree")
    if not mask.any():
        return 0.0
    d = np.linalg.norm(estimate - truth, axis=-1)
    return float(d[mask].mean())


def frame_ompe(estimate, truth, mask):
    """Per-frame OMPE, NaN for frames with no masked entries."""
    d = np.linalg.norm(np.asarray(estimate, float) - np.asarray(truth, float), axis=-1)
    mask = np.asarray(mask, dtype=bool)
    out = np.full(d.shape[0], np.nan)
    counts = mask.sum(axis=1)
    rows = counts > 0
    out[rows] = np.where(mask, d, 0.0).sum(axis=1)[rows] / counts[rows]
    return out


def metric_joe(est_motion, truth_motion):
    """Joint orientation error: mean geodesic angle in degrees."""
    if est_motion.rotations.shape != truth_motion.rotations.shape:
        raise ValidationError("motions have different shapes")
    return float(_geodesic_deg(est_motion.rotations, truth_motion.rotations).mean())


def frame_joe(est_motion, truth_motion):
    return _geodesic_deg(est_motion.rotations, truth_motion.rotations).mean(axis=1)


def metric_jpe(est_motion, est_skeleton, truth_motion, truth_skeleton):
    """Joint position error via forward kinematics, each motion under its
    own skeleton, mean over frames and joints (cm)."""
    pe = forward_kinematics(est_motion, est_skeleton)
    pt = forward_kinematics(truth_motion, truth_skeleton)
    if pe.shape != pt.shape:
        raise ValidationError("motions have different joint counts")
    return float(np.linalg.norm(pe - pt, axis=-1).mean())


def frame_jpe(est_motion, est_skeleton, truth_motion, truth_skeleton):
    pe = forward_kinematics(est_motion, est_skeleton)
    pt = forward_kinematics(truth_motion, truth_skeleton)
    return np.linalg.norm(pe - pt, axis=-1).mean(axis=1)
