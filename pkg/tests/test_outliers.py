"""Spike detection on second differences and spline repair."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mocapkit.errors import ValidationError
from mocapkit.outliers import (
    ThresholdPolicy,
    acceleration_profile,
    detect_outliers,
    repair_outliers,
)
from mocapkit.sequence import MarkerSequence


def make_seq(pos, vis=None):
    pos = np.asarray(pos, dtype=float)
    t, m = pos.shape[:2]
    if vis is None:
        vis = np.ones((t, m), dtype=np.int8)
    return MarkerSequence(120.0, [f"M{i}" for i in range(m)], ["body"] * m, pos, vis)


def linear_with_spike(t=30, frame=12, height=10.0):
    ts = np.arange(t, dtype=float)
    pos = np.zeros((t, 1, 3))
    pos[:, 0, 0] = 0.5 * ts
    pos[:, 0, 1] = -0.2 * ts + 3.0
    clean = pos.copy()
    pos[frame, 0, 2] += height
    return make_seq(pos), make_seq(clean)


def test_profile_of_single_spike_is_h_2h_h():
    seq, _ = linear_with_spike(height=10.0)
    profile = acceleration_profile(seq)
    assert_allclose(profile[11:14, 0], [10.0, 20.0, 10.0], atol=1e-9)
    # The linear background contributes nothing.
    assert np.nanmax(np.delete(profile[:, 0], [11, 12, 13])) == pytest.approx(0.0)
    assert np.isnan(profile[0, 0]) and np.isnan(profile[-1, 0])


def test_profile_undefined_next_to_occlusion():
    seq, _ = linear_with_spike()
    vis = seq.visibility.copy()
    vis[5, 0] = 0
    seq = seq.with_positions(seq.positions, vis)
    profile = acceleration_profile(seq)
    assert np.isnan(profile[4:7, 0]).all()


def test_single_spike_yields_single_event():
    seq, _ = linear_with_spike(frame=12, height=5.0)
    report = detect_outliers(seq, ThresholdPolicy("absolute", 6.0))
    assert len(report.events) == 1
    event = report.events[0]
    assert (event.marker, event.frame) == (0, 12)
    assert event.value == pytest.approx(10.0)
    assert report.thresholds[0] == pytest.approx(6.0)


def test_robust_policy_catches_spike_on_quiet_marker():
    seq, _ = linear_with_spike(height=10.0)
    report = detect_outliers(seq)  # median + 8 * MAD, both zero here
    assert [e.frame for e in report.events] == [12]


def test_robust_policy_tolerates_smooth_motion():
    t = np.arange(60, dtype=float)
    pos = np.zeros((60, 2, 3))
    pos[:, 0, 0] = 10.0 * np.sin(t / 7.0)
    pos[:, 1, 1] = 5.0 * np.cos(t / 11.0)
    report = detect_outliers(make_seq(pos))
    assert report.events == ()


def test_spike_beside_occlusion_boundary_is_detected():
    seq, _ = linear_with_spike(frame=11)
    vis = seq.visibility.copy()
    vis[:10, 0] = 0
    pos = seq.positions.copy()
    pos[:10, 0] = np.nan
    seq = seq.with_positions(pos, vis)
    report = detect_outliers(seq, ThresholdPolicy("absolute", 6.0))
    assert [e.frame for e in report.events] == [11]


def test_repair_restores_linear_trajectory():
    seq, clean = linear_with_spike(height=10.0)
    report = detect_outliers(seq, ThresholdPolicy("absolute", 6.0))
    repaired, report = repair_outliers(seq, report, half_window=2)
    assert np.abs(repaired.positions - clean.positions).max() < 1e-9
    (window,) = report.repair_windows
    assert (window.first, window.last, window.method) == (10, 14, "spline")
    assert_array_equal(repaired.visibility, seq.visibility)


def test_repair_restores_cubic_trajectory():
    t = 40
    ts = np.arange(t, dtype=float)
    pos = np.zeros((t, 1, 3))
    pos[:, 0, 0] = 0.002 * ts**3 - 0.06 * ts**2 + 0.8 * ts
    pos[:, 0, 2] = 0.001 * ts**3
    clean = pos.copy()
    pos[20, 0, 1] += 8.0
    seq = make_seq(pos)
    report = detect_outliers(seq, ThresholdPolicy("absolute", 5.0))
    repaired, _ = repair_outliers(seq, report, half_window=2)
    assert np.abs(repaired.positions - clean).max() < 1e-6


def test_adjacent_events_merge_into_one_window():
    seq, _ = linear_with_spike(frame=12, height=10.0)
    pos = seq.positions.copy()
    pos[15, 0, 2] += 10.0
    seq = seq.with_positions(pos)
    report = detect_outliers(seq, ThresholdPolicy("absolute", 6.0))
    assert [e.frame for e in report.events] == [12, 15]
    repaired, report = repair_outliers(seq, report, half_window=2)
    (window,) = report.repair_windows
    assert (window.first, window.last) == (10, 17)


def test_unanchorable_window_is_marked_occluded():
    seq, _ = linear_with_spike(t=12, frame=2, height=10.0)
    report = detect_outliers(seq, ThresholdPolicy("absolute", 6.0))
    repaired, report = repair_outliers(seq, report, half_window=2)
    (window,) = report.repair_windows
    assert window.method == "occluded"
    assert (repaired.visibility[window.first : window.last + 1, 0] == 0).all()


def test_repair_touches_only_window_frames():
    seq, _ = linear_with_spike()
    report = detect_outliers(seq, ThresholdPolicy("absolute", 6.0))
    repaired, report = repair_outliers(seq, report, half_window=1)
    (window,) = report.repair_windows
    outside = np.ones(seq.n_frames, dtype=bool)
    outside[window.first : window.last + 1] = False
    assert_array_equal(repaired.positions[outside], seq.positions[outside])


def test_policy_validation():
    with pytest.raises(ValidationError):
        ThresholdPolicy("percentile", 5.0)
    with pytest.raises(ValidationError):
        ThresholdPolicy("absolute", 0.0)
    seq, _ = linear_with_spike()
    report = detect_outliers(seq)
    with pytest.raises(ValidationError):
        repair_outliers(seq, report, half_window=-1)
