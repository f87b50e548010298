"""Rotation-matrix utilities.

Rotations are 3x3 row-major matrices acting on column vectors (``R @ p``).
Angles are degrees everywhere in the public API.
"""

import numpy as np

from .errors import DegenerateInputError


def rot_x(deg):
    """Rotation about the x axis by ``deg`` degrees."""
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg):
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg):
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def gram_schmidt_rotation(m):
    """Project an arbitrary 3x3 matrix onto the nearest-by-construction
    rotation via Gram-Schmidt on its first two columns.

    Column 1 is normalized, column 2 is orthogonalized against it and
    normalized, and column 3 is their cross product, which forces
    ``det == +1``.

    Parameters
    ----------
    m : (3, 3) array_like
        Candidate matrix, e.g. the raw 9-vector output of a network head.

    Returns
    -------
    (3, 3) ndarray
        Orthonormal rotation with determinant +1.

    Raises
    ------
    DegenerateInputError
        If the first column is near zero or the first two columns are
        near parallel (no stable frame can be built).
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    c1 = m[:, 0]
    n1 = np.linalg.norm(c1)
    if n1 < 1e-9:
        raise DegenerateInputError("first column is numerically zero")
    c1 = c1 / n1
    c2 = m[:, 1] - np.dot(c1, m[:, 1]) * c1
    n2 = np.linalg.norm(c2)
    if n2 < 1e-9:
        raise DegenerateInputError("first two columns are numerically parallel")
    c2 = c2 / n2
    c3 = np.cross(c1, c2)
    return np.column_stack([c1, c2, c3])


def geodesic_angle(r1, r2):
    """Geodesic distance between two rotations, in degrees.

    Computed as ``arccos((trace(r1.T @ r2) - 1) / 2)`` with the cosine
    clamped to [-1, 1] so nearly-identical inputs cannot produce NaN.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    cos = (np.trace(r1.T @ r2) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def is_rotation(m, tol=1e-6):
    """True if ``m`` is orthonormal with determinant +1 within ``tol``."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        return False
    return (
        np.allclose(m.T @ m, np.eye(3), atol=tol)
        and abs(np.linalg.det(m) - 1.0) < tol
    )
