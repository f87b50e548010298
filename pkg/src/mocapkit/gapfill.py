"""Occlusion gap filling by distance-matrix interpolation.

For each occluded stretch of a marker, the squared-distance matrix between
the marker and its low-variance neighbors is interpolated linearly between
the anchor frames bracketing the gap, embedded back into 3-D with classical
multidimensional scaling, and rigidly aligned onto the observed neighbor
positions at each interior frame. Frames where that route is unavailable
(too few usable neighbors, degenerate geometry) fall back to a cubic spline
on the marker's own trajectory.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateInputError, ValidationError
from .locality import distance_matrix_at_frame

#: per-frame fill methods recorded in reports
EDM, SPLINE, HOLD, UNFILLED = "edm", "spline", "hold", "none"


@dataclass(frozen=True)
class Gap:
    """One maximal occlusion run of one marker.

    ``start`` is the last visible frame before the run, ``end`` the first
    visible frame after it; either is None when the run touches the sequence
    boundary.
    """

    marker: int
    start: int | None
    end: int | None
    first: int  # first occluded frame
    last: int  # last occluded frame

    @property
    def frames(self):
        return range(self.first, self.last + 1)

    @property
    def at_boundary(self):
        return self.start is None or self.end is None


@dataclass(frozen=True)
class GapFill:
    """Fill outcome for one gap: method and residual per interior frame."""

    gap: Gap
    methods: tuple
    residuals: tuple  # distance-consistency residual; NaN off the EDM route

    @property
    def filled(self):
        return all(m != UNFILLED for m in self.methods)


def find_gaps(seq):
    """All maximal occlusion runs, ordered by (marker, first frame)."""
    gaps = []
    vis = seq.visible
    t = seq.n_frames
    for i in range(seq.n_markers):
        col = vis[:, i]
        f = 0
        while f < t:
            if col[f]:
                f += 1
                continue
            g = f
            while g + 1 < t and not col[g + 1]:
                g += 1
            start = f - 1 if f > 0 else None
            end = g + 1 if g + 1 < t else None
            gaps.append(Gap(i, start, end, f, g))
            f = g + 1
    return gaps


def interpolate_distance_matrix(d_start, d_end, start, end, frame):
    """Linear interpolation of squared-distance matrices.

    ``D^t = ((e - t) * D^s + (t - s) * D^e) / (e - s)`` for s < t < e.
    """
    if not start < frame < end:
        raise ValidationError(f"frame {frame} not inside ({start}, {end})")
    w = (frame - start) / (end - start)
    return (1.0 - w) * np.asarray(d_start, float) + w * np.asarray(d_end, float)


def mds_embed(d):
    """Classical MDS embedding of a squared-distance matrix.

    Double-centers ``d`` with J = I - (1/n) 11^T, eigendecomposes
    B = -J d J / 2, truncates negative eigenvalues, and keeps at most the
    three largest components.

    Parameters
    ----------
    d : (n, n) array_like
        Symmetric squared distances.

    Returns
    -------
    (n, 3) ndarray
        Embedded points (rows); trailing columns are zero when the matrix
        has rank below 3. Pairwise squared distances reproduce ``d`` up to
        numerical precision whenever ``d`` is Euclidean of rank <= 3.
    """
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    if d.shape != (n, n):
        raise ValidationError(f"distance matrix must be square, got {d.shape}")
    j = np.eye(n) - np.full((n, n), 1.0 / n)
    b = -0.5 * (j @ d @ j)
    vals, vecs = np.linalg.eigh(b)
    order = np.argsort(vals)[::-1][:3]
    vals = np.maximum(vals[order], 0.0)
    pts = np.zeros((n, 3))
    pts[:, : len(order)] = vecs[:, order] * np.sqrt(vals)
    return pts


def procrustes_align(source, target):
    """Rigid transform (R, t) minimizing ``||R @ source_i + t - target_i||``.

    Kabsch via SVD of the cross-covariance; a reflection is corrected by
    flipping the sign of the smallest singular direction so det(R) = +1.

    Raises
    ------
    DegenerateInputError
        When the source points are coincident or collinear (rotation about
        the degenerate axis would be unconstrained).
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if source.shape != target.shape or source.ndim != 2 or source.shape[1] != 3:
        raise ValidationError("point sets must both be (N, 3)")
    if source.shape[0] < 3:
        raise ValidationError("need at least 3 point pairs")
    sc = source.mean(axis=0)
    tc = target.mean(axis=0)
    s0 = source - sc
    sv = np.linalg.svd(s0, compute_uv=False)
    if sv[1] < 1e-9 * max(1.0, sv[0]):
        raise DegenerateInputError("source points are coincident or collinear")
    h = s0.T @ (target - tc)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return r, tc - r @ sc


def _fit_residual(point, neighbor_pts, sq_dists):
    """Distance-consistency residual: how far the recovered point's squared
    distances sit from the interpolated matrix row."""
    d = np.sum((neighbor_pts - point) ** 2, axis=1)
    return float(np.abs(d - sq_dists).sum())


def _spline_fallback(seq, marker, frames):
    """Cubic spline (or boundary hold) on the marker's own visible samples.

    Uses up to four visible anchor frames on each side of the gap. Returns
    (positions, methods); positions rows are NaN where nothing could be done.
    """
    vis = seq.visible[:, marker]
    first, last = frames[0], frames[-1]
    left = [t for t in range(first - 1, -1, -1) if vis[t]][:4][::-1]
    right = [t for t in range(last + 1, seq.n_frames) if vis[t]][:4]
    anchors = left + right
    out = np.full((len(frames), 3), np.nan)
    if not anchors:
        return out, [UNFILLED] * len(frames)
    if not left or not right:
        # boundary gap with support on one side only: hold the nearest sample
        hold = seq.positions[anchors[0] if not left else anchors[-1], marker]
        out[:] = hold
        return out, [HOLD] * len(frames)
    spline = CubicSpline(anchors, seq.positions[anchors, marker], axis=0)
    out[:] = spline(np.asarray(frames))
    return out, [SPLINE] * len(frames)


def edm_fill_gap(seq, gap, table):
    """Fill one gap; returns (positions for gap.frames, GapFill record).

    Interior frames take the distance-matrix route when at least three of the
    marker's neighbors are visible at both anchors and at the frame itself;
    otherwise they fall back to the marker's own spline. Boundary gaps use
    the single available anchor's distance matrix as a constant.
    """
    i = gap.marker
    frames = list(gap.frames)
    vis = seq.visible
    pos = seq.positions
    neighbors = table.neighbors[i]
    out = np.full((len(frames), 3), np.nan)
    methods = [UNFILLED] * len(frames)
    residuals = [np.nan] * len(frames)
    if gap.start is None and gap.end is None:
        return out, GapFill(gap, tuple(methods), tuple(residuals))
    anchors = [a for a in (gap.start, gap.end) if a is not None]

    spline_pos = None  # computed lazily, shared by all fallback frames

    for k, t in enumerate(frames):
        usable = [j for j in neighbors if all(vis[a, j] for a in anchors) and vis[t, j]]
        solved = False
        if len(usable) >= 3:
            mats = [distance_matrix_at_frame(seq, i, usable, a) for a in anchors]
            if len(mats) == 2:
                d_t = interpolate_distance_matrix(
                    mats[0], mats[1], gap.start, gap.end, t
                )
            else:
                d_t = mats[0]
            pts = mds_embed(d_t)
            # An MDS embedding has arbitrary chirality; align the mirror
            # image too and keep whichever fits the observed neighbors.
            best = None
            for cand in (pts, pts * np.array([1.0, 1.0, -1.0])):
                try:
                    r, trans = procrustes_align(cand[1:], pos[t, usable])
                except DegenerateInputError:
                    continue
                fit = np.linalg.norm(
                    cand[1:] @ r.T + trans - pos[t, usable], axis=1
                ).sum()
                if best is None or fit < best[0]:
                    best = (fit, r @ cand[0] + trans)
            if best is not None:
                p = best[1]
                out[k] = p
                methods[k] = EDM
                residuals[k] = _fit_residual(p, pos[t, usable], d_t[0, 1:])
                solved = True
        if not solved:
            if spline_pos is None:
                spline_pos, spline_methods = _spline_fallback(seq, i, frames)
            out[k] = spline_pos[k]
            methods[k] = spline_methods[k]
    return out, GapFill(gap, tuple(methods), tuple(residuals))


def fill_sequence(seq, table):
    """Fill every gap in the sequence.

    Every fill reads only originally observed samples, so gaps are
    independent and the result does not depend on processing order.
    Visibility is left untouched: filled entries remain flagged as occluded
    estimates for downstream consumers and evaluation.

    Returns
    -------
    (MarkerSequence, list of GapFill)
    """
    gaps = find_gaps(seq)
    new_pos = np.array(seq.positions)
    records = []
    for gap in gaps:
        filled, record = edm_fill_gap(seq, gap, table)
        ok = np.isfinite(filled).all(axis=1)
        frames = np.asarray(list(gap.frames))
        new_pos[frames[ok], gap.marker] = filled[ok]
        records.append(record)
    return seq.with_positions(new_pos), records
