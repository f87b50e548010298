"""Neighbor-marker selection from pairwise distance statistics.

Markers that stay at a near-constant distance from each other over time move
rigidly together; the variance of their pairwise distance is the locality
signal used for both gap filling and solving. Neighbors never cross the
body/hand split: a pair is admissible only if both markers belong to a common
stream (wrist reference markers belong to the body stream and to their hand's
stream).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError, VisibilityError
from .sequence import STREAMS, _frozen
from .serialize import dump_json, load_json

# label -> streams that include it
_LABEL_STREAMS = {}
for _stream, _labels in STREAMS.items():
    for _lab in _labels:
        _LABEL_STREAMS.setdefault(_lab, set()).add(_stream)


def _distance_sums(seq):
    """Per-pair co-visible count, sum of distances, sum of squares."""
    m = seq.n_markers
    count = np.zeros((m, m))
    s1 = np.zeros((m, m))
    s2 = np.zeros((m, m))
    vis = seq.visible
    pos = seq.positions
    for i in range(m):
        for j in range(i + 1, m):
            both = vis[:, i] & vis[:, j]
            n = int(both.sum())
            if n == 0:
                continue
            d = np.linalg.norm(pos[both, i] - pos[both, j], axis=1)
            count[i, j] = count[j, i] = n
            s1[i, j] = s1[j, i] = d.sum()
            s2[i, j] = s2[j, i] = (d * d).sum()
    return count, s1, s2


def _stats_from_sums(count, s1, s2):
    mean = np.full(count.shape, np.nan)
    var = np.full(count.shape, np.inf)
    ok = count >= 2
    mean[ok] = s1[ok] / count[ok]
    # population variance; clip tiny negative values from cancellation
    var[ok] = np.maximum(s2[ok] / count[ok] - mean[ok] ** 2, 0.0)
    np.fill_diagonal(mean, 0.0)
    np.fill_diagonal(var, np.inf)  # self is never a neighbor candidate
    return mean, var


def pairwise_distance_stats(seq):
    """Mean and population variance of pairwise marker distances.

    Statistics are taken over frames where both markers are visible. Pairs
    with fewer than two co-visible frames get variance +inf (and mean NaN) so
    they are pushed out of every neighbor candidate list rather than imputed.

    Returns
    -------
    mean, variance : (M, M) ndarray
        Symmetric; the diagonal carries mean 0 and variance +inf.
    """
    return _stats_from_sums(*_distance_sums(seq))


def pooled_distance_stats(seqs):
    """Distance stats pooled over several sequences with one marker set."""
    seqs = list(seqs)
    if not seqs:
        raise ValidationError("no sequences to pool")
    names = seqs[0].marker_names
    for s in seqs[1:]:
        if s.marker_names != names:
            raise ValidationError("pooled sequences must share marker names")
    count = s1 = s2 = None
    for s in seqs:
        c, a, b = _distance_sums(s)
        if count is None:
            count, s1, s2 = c, a, b
        else:
            count, s1, s2 = count + c, s1 + a, s2 + b
    return _stats_from_sums(count, s1, s2)


@dataclass(frozen=True)
class NeighborTable:
    """Per-marker neighbor lists ordered by ascending distance variance."""

    k: int
    marker_names: tuple
    neighbors: tuple  # tuple of tuples of marker indices
    variances: tuple  # variance for each selected neighbor, aligned
    short: tuple  # indices of markers with fewer than k admissible neighbors

    def __post_init__(self):
        object.__setattr__(self, "marker_names", tuple(self.marker_names))
        object.__setattr__(self, "neighbors", tuple(tuple(n) for n in self.neighbors))
        object.__setattr__(self, "variances", tuple(tuple(v) for v in self.variances))
        object.__setattr__(self, "short", tuple(self.short))


def select_neighbors(stats, part_labels, k, marker_names=None):
    """Pick the ``k`` lowest-variance admissible neighbors per marker.

    Parameters
    ----------
    stats : (mean, variance) pair of (M, M) arrays
        As returned by :func:`pairwise_distance_stats`.
    part_labels : sequence of str
        One part label per marker; controls stream admissibility.
    k : int
    marker_names : sequence of str, optional
        Carried into the table for serialization; synthesized if omitted.

    Notes
    -----
    Ties on variance break by lower mean distance, then lower marker index,
    so the selection is fully deterministic. Markers with fewer than ``k``
    admissible finite-variance candidates keep a shorter list and are
    reported in ``short``.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    mean, var = stats
    m = var.shape[0]
    if len(part_labels) != m:
        raise ValidationError("part_labels length does not match stats")
    streams = []
    for lab in part_labels:
        try:
            streams.append(_LABEL_STREAMS[lab])
        except KeyError:
            raise ValidationError(f"unknown part label {lab!r}") from None
    neighbors, variances, short = [], [], []
    for i in range(m):
        cands = [
            (var[i, j], mean[i, j], j)
            for j in range(m)
            if j != i and streams[i] & streams[j] and np.isfinite(var[i, j])
        ]
        cands.sort()
        chosen = cands[:k]
        neighbors.append(tuple(j for _, _, j in chosen))
        variances.append(tuple(float(v) for v, _, _ in chosen))
        if len(chosen) < k:
            short.append(i)
    if marker_names is None:
        marker_names = tuple(f"M{i}" for i in range(m))
    return NeighborTable(k, tuple(marker_names), neighbors, variances, tuple(short))


def distance_matrix_at_frame(seq, marker, neighbors, frame):
    """Squared-distance matrix over {marker} + neighbors at one frame.

    The occluded-to-be-solved marker goes first (row/column 0). Every
    participant must be visible at ``frame``.
    """
    idx = [marker, *neighbors]
    vis = seq.visible[frame]
    for i in idx:
        if not vis[i]:
            raise VisibilityError(
                f"marker {seq.marker_names[i]!r} is occluded at frame {frame}"
            )
    pts = seq.positions[frame, idx]
    diff = pts[:, None, :] - pts[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


# -- JSON round-trip -------------------------------------------------------


def save_neighbor_table(table, path):
    dump_json(
        {
            "k": table.k,
            "marker_names": list(table.marker_names),
            "neighbors": [list(n) for n in table.neighbors],
            "variances": [list(v) for v in table.variances],
            "short": list(table.short),
        },
        path,
    )


def load_neighbor_table(path):
    doc = load_json(path)
    return NeighborTable(
        k=doc["k"],
        marker_names=doc["marker_names"],
        neighbors=doc["neighbors"],
        variances=doc["variances"],
        short=doc["short"],
    )
