"""Rotation utilities: construction, orthonormalization, geodesic angle."""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from mocapkit.errors import DegenerateInputError
from mocapkit.rotation import (
    geodesic_angle,
    gram_schmidt_rotation,
    is_rotation,
    rot_x,
    rot_y,
    rot_z,
)

angles = st.floats(min_value=-360.0, max_value=360.0)


def test_axis_rotations_rotate_unit_vectors():
    assert_allclose(rot_z(90.0) @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-12)
    assert_allclose(rot_x(90.0) @ [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], atol=1e-12)
    assert_allclose(rot_y(90.0) @ [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], atol=1e-12)


@given(angles)
def test_axis_rotations_are_rotations(deg):
    for make in (rot_x, rot_y, rot_z):
        assert is_rotation(make(deg), tol=1e-9)


def test_geodesic_angle_between_x_rotations():
    # Same axis, so the geodesic distance is the plain angle difference.
    assert_allclose(geodesic_angle(rot_x(10.0), rot_x(55.0)), 45.0, atol=1e-9)


@given(angles)
def test_geodesic_angle_identity_is_zero(deg):
    r = rot_z(deg)
    assert geodesic_angle(r, r) == pytest.approx(0.0, abs=1e-5)


@given(angles, angles)
def test_geodesic_angle_is_symmetric(a, b):
    r1, r2 = rot_y(a), rot_z(b)
    assert geodesic_angle(r1, r2) == pytest.approx(geodesic_angle(r2, r1), abs=1e-9)


def test_gram_schmidt_recovers_perturbed_rotation():
    rng = np.random.default_rng(3)
    r = rot_z(31.0) @ rot_y(-54.0) @ rot_x(12.0)
    noisy = r + 1e-3 * rng.standard_normal((3, 3))
    fixed = gram_schmidt_rotation(noisy)
    assert_allclose(fixed.T @ fixed, np.eye(3), atol=1e-12)
    assert_allclose(np.linalg.det(fixed), 1.0, atol=1e-12)
    assert geodesic_angle(fixed, r) < 0.5


def test_gram_schmidt_is_identity_on_rotations():
    r = rot_x(20.0) @ rot_z(70.0)
    assert_allclose(gram_schmidt_rotation(r), r, atol=1e-12)


def test_gram_schmidt_never_returns_a_reflection():
    # A negated third column gives det -1; the cross product rebuilds it.
    r = rot_y(40.0).copy()
    r[:, 2] *= -1.0
    fixed = gram_schmidt_rotation(r)
    assert np.linalg.det(fixed) == pytest.approx(1.0, abs=1e-12)


def test_gram_schmidt_rejects_zero_column():
    m = np.zeros((3, 3))
    m[:, 1] = [0.0, 1.0, 0.0]
    with pytest.raises(DegenerateInputError):
        gram_schmidt_rotation(m)


def test_gram_schmidt_rejects_parallel_columns():
    m = np.zeros((3, 3))
    m[:, 0] = [1.0, 0.0, 0.0]
    m[:, 1] = [2.0, 0.0, 0.0]
    with pytest.raises(DegenerateInputError):
        gram_schmidt_rotation(m)


@given(st.integers(0, 2**32 - 1))
def test_gram_schmidt_output_is_always_a_rotation(seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((3, 3))
    try:
        fixed = gram_schmidt_rotation(m)
    except DegenerateInputError:
        return
    assert is_rotation(fixed, tol=1e-9)


def test_is_rotation_rejects_scaled_and_reflected():
    assert is_rotation(np.eye(3))
    assert not is_rotation(2.0 * np.eye(3))
    assert not is_rotation(np.diag([1.0, 1.0, -1.0]))
    assert not is_rotation(np.eye(4))
