"""Spike detection on the second difference of marker trajectories.

A marker that jumps for a frame or two (ghost swap, reflection) shows up as
a sharp peak in ``||p(t+1) - 2 p(t) + p(t-1)||``. Detection thresholds are
either absolute (cm/frame^2) or robust per marker (median + c * MAD of the
profile); detections must also be local maxima of the profile so a single
spike yields a single event. Repair replaces a small window around each
event with a cubic spline through nearby trusted samples.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ValidationError


@dataclass(frozen=True)
class ThresholdPolicy:
    """``absolute`` uses ``value`` as the threshold for every marker;
    ``robust`` uses per-marker ``median + c * MAD`` with c = ``value``."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("absolute", "robust"):
            raise ValidationError(f"unknown threshold policy {self.kind!r}")
        if not self.value > 0:
            raise ValidationError("threshold value must be > 0")


DEFAULT_POLICY = ThresholdPolicy("robust", 8.0)


@dataclass(frozen=True)
class OutlierEvent:
    marker: int
    frame: int
    value: float  # profile value at the event
    threshold: float


@dataclass(frozen=True)
class RepairWindow:
    marker: int
    first: int
    last: int
    method: str  # "spline" or "occluded"


@dataclass(frozen=True)
class OutlierReport:
    policy: ThresholdPolicy
    thresholds: tuple  # per marker, NaN where the profile was empty
    events: tuple
    repair_windows: tuple = ()


def acceleration_profile(seq):
    """Second-difference magnitude per frame and marker, cm/frame^2.

    Defined only where the marker is visible at t-1, t, and t+1; NaN
    elsewhere (including the first and last frame).
    """
    pos = seq.positions
    vis = seq.visible
    t = seq.n_frames
    out = np.full((t, seq.n_markers), np.nan)
    if t < 3:
        return out
    ok = vis[:-2] & vis[1:-1] & vis[2:]
    second = pos[2:] - 2.0 * pos[1:-1] + pos[:-2]
    mag = np.linalg.norm(second, axis=-1)
    out[1:-1] = np.where(ok, mag, np.nan)
    return out


def detect_outliers(seq, policy=DEFAULT_POLICY):
    """Find spike events: profile above threshold and a local maximum.

    Neighboring undefined profile values are treated as -inf, so spikes next
    to occlusion boundaries are still detectable. Events are ordered by
    (marker, frame).
    """
    profile = acceleration_profile(seq)
    t, m = profile.shape
    thresholds = np.full(m, np.nan)
    events = []
    padded = np.full((t + 2, m), -np.inf)
    padded[1:-1] = np.where(np.isnan(profile), -np.inf, profile)
    for i in range(m):
        vals = profile[:, i]
        defined = vals[np.isfinite(vals)]
        if defined.size == 0:
            continue
        if policy.kind == "absolute":
            thr = policy.value
        else:
            med = np.median(defined)
            mad = np.median(np.abs(defined - med))
            thr = med + policy.value * mad
        thresholds[i] = thr
        col = padded[:, i]
        for f in range(t):
            v = col[f + 1]
            if v > thr and v >= col[f] and v >= col[f + 2]:
                events.append(OutlierEvent(i, f, float(v), float(thr)))
    events.sort(key=lambda e: (e.marker, e.frame))
    return OutlierReport(policy, tuple(thresholds), tuple(events))


def _merged_windows(events, half_window, n_frames):
    """Per-marker clipped [f-h, f+h] windows, overlapping ones merged."""
    by_marker = {}
    for e in events:
        lo = max(0, e.frame - half_window)
        hi = min(n_frames - 1, e.frame + half_window)
        by_marker.setdefault(e.marker, []).append((lo, hi))
    merged = {}
    for marker, spans in by_marker.items():
        spans.sort()
        acc = [list(spans[0])]
        for lo, hi in spans[1:]:
            if lo <= acc[-1][1] + 1:
                acc[-1][1] = max(acc[-1][1], hi)
            else:
                acc.append([lo, hi])
        merged[marker] = acc
    return merged


def repair_outliers(seq, report, half_window=2):
    """Replace event windows by spline estimates through trusted anchors.

    Anchors are the four nearest visible frames on each side of a window
    that are not themselves inside any repair window of the same marker.
    Windows with fewer than two anchors on either side cannot be repaired
    trustworthily; their frames are marked occluded instead.

    Returns
    -------
    (MarkerSequence, OutlierReport)
        The repaired sequence and the report with ``repair_windows`` filled
        in (the provenance channel for every touched frame).
    """
    if half_window < 0:
        raise ValidationError("half_window must be >= 0")
    t = seq.n_frames
    pos = np.array(seq.positions)
    vis = np.array(seq.visibility)
    windows = []
    for marker, spans in sorted(
        _merged_windows(report.events, half_window, t).items()
    ):
        banned = set()
        for lo, hi in spans:
            banned.update(range(lo, hi + 1))
        visible = seq.visible[:, marker]
        for lo, hi in spans:
            left = [f for f in range(lo - 1, -1, -1) if visible[f] and f not in banned]
            right = [f for f in range(hi + 1, t) if visible[f] and f not in banned]
            left, right = left[:4][::-1], right[:4]
            if len(left) < 2 or len(right) < 2:
                vis[lo : hi + 1, marker] = 0
                windows.append(RepairWindow(marker, lo, hi, "occluded"))
                continue
            anchors = left + right
            spline = CubicSpline(anchors, pos[anchors, marker], axis=0)
            pos[lo : hi + 1, marker] = spline(np.arange(lo, hi + 1))
            windows.append(RepairWindow(marker, lo, hi, "spline"))
    repaired = seq.with_positions(pos, vis)
    return repaired, replace(report, repair_windows=tuple(windows))
