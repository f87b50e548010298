"""Error metrics: hand-computed values and degenerate inputs."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mocapkit.errors import ValidationError
from mocapkit.metrics import (
    frame_joe,
    frame_jpe,
    frame_ompe,
    metric_joe,
    metric_jpe,
    metric_ompe,
)
from mocapkit.rotation import rot_x, rot_z
from mocapkit.skeleton import Motion, Skeleton


def test_ompe_identical_inputs_give_zero():
    rng = np.random.default_rng(0)
    pos = rng.normal(size=(4, 3, 3))
    mask = np.ones((4, 3), dtype=bool)
    assert metric_ompe(pos, pos, mask) == 0.0


def test_ompe_empty_mask_gives_zero():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(2, 5, 2, 3))
    assert metric_ompe(a, b, np.zeros((5, 2), dtype=bool)) == 0.0


def test_ompe_hand_value():
    truth = np.zeros((2, 2, 3))
    est = np.zeros((2, 2, 3))
    est[0, 0] = [3.0, 4.0, 0.0]  # distance 5
    est[1, 1] = [0.0, 0.0, 1.0]  # distance 1
    mask = np.array([[True, False], [False, True]])
    assert metric_ompe(est, truth, mask) == pytest.approx(3.0)


def test_ompe_ignores_unmasked_garbage():
    truth = np.zeros((1, 2, 3))
    est = truth.copy()
    est[0, 1] = [1e6, 0.0, 0.0]
    mask = np.array([[True, False]])
    assert metric_ompe(est, truth, mask) == 0.0


def test_ompe_shape_mismatch():
    with pytest.raises(ValidationError):
        metric_ompe(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)), np.zeros((2, 2), bool))


def test_frame_ompe_nan_on_unmasked_frames():
    truth = np.zeros((2, 1, 3))
    est = truth.copy()
    est[0, 0] = [2.0, 0.0, 0.0]
    mask = np.array([[True], [False]])
    per = frame_ompe(est, truth, mask)
    assert per[0] == pytest.approx(2.0)
    assert np.isnan(per[1])


def _motion(rotations, trans=None):
    rot = np.asarray(rotations)
    if trans is None:
        trans = np.zeros((rot.shape[0], 3))
    return Motion(trans, rot)


def test_joe_hand_value():
    a = _motion(np.stack([np.stack([rot_x(0.0), rot_x(0.0)])]))
    b = _motion(np.stack([np.stack([rot_x(30.0), rot_x(90.0)])]))
    assert metric_joe(a, b) == pytest.approx(60.0, abs=1e-9)
    assert metric_joe(a, a) == pytest.approx(0.0, abs=1e-5)


def test_frame_joe_per_frame():
    rot = np.empty((2, 1, 3, 3))
    rot[0, 0] = rot_z(10.0)
    rot[1, 0] = rot_z(50.0)
    base = _motion(np.tile(np.eye(3), (2, 1, 1, 1)))
    assert_allclose(frame_joe(_motion(rot), base), [10.0, 50.0], atol=1e-9)


def test_jpe_pure_translation_offset():
    skel = Skeleton(["a", "b"], [-1, 0], [[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    rot = np.tile(np.eye(3), (3, 2, 1, 1))
    truth = Motion(np.zeros((3, 3)), rot)
    est = Motion(np.full((3, 3), [1.0, 2.0, 2.0]), rot)
    assert metric_jpe(est, skel, truth, skel) == pytest.approx(3.0)
    assert_allclose(frame_jpe(est, skel, truth, skel), [3.0, 3.0, 3.0])


def test_jpe_each_motion_uses_its_own_skeleton():
    short = Skeleton(["a", "b"], [-1, 0], [[0.0, 0.0, 0.0], [4.0, 0.0, 0.0]])
    long = Skeleton(["a", "b"], [-1, 0], [[0.0, 0.0, 0.0], [6.0, 0.0, 0.0]])
    rot = np.tile(np.eye(3), (1, 2, 1, 1))
    m = Motion(np.zeros((1, 3)), rot)
    # Same pose, bones differing by 2 cm: only the child joint moves.
    assert metric_jpe(m, short, m, long) == pytest.approx(1.0)
