"""Heterogeneous marker/joint graph construction.

Three edge sets feed the solver: marker-marker edges from the neighbor
table, joint-joint edges mirroring the skeleton tree, and marker-joint
cross edges from rest-pose proximity. A translation ("global") node is
appended after the joints and wired to every marker and joint. All edge
lists are directed ``(dst, src)`` pairs, include self-edges, and are sorted
so graph construction is deterministic.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .sequence import _frozen

DEFAULT_THRESHOLD_SCALE = 1.5


@dataclass(frozen=True)
class HeteroGraph:
    """Node counts, edge lists, and the joint-tree metadata the solver
    needs to rebuild skeletons from its outputs."""

    n_markers: int
    joint_names: tuple
    joint_parents: np.ndarray
    marker_edges: np.ndarray  # (E, 2) over marker indices
    joint_edges: np.ndarray  # (E, 2) over n_joints + 1 nodes (global last)
    cross_pairs: np.ndarray  # (C, 2) undirected (marker, joint) pairs
    threshold: float

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "joint_parents", _frozen(self.joint_parents, int))
        object.__setattr__(self, "marker_edges", _frozen(self.marker_edges, int))
        object.__setattr__(self, "joint_edges", _frozen(self.joint_edges, int))
        object.__setattr__(self, "cross_pairs", _frozen(self.cross_pairs, int))

    @property
    def n_joints(self):
        return len(self.joint_names)

    @property
    def global_index(self):
        """Index of the translation node within the joint node set."""
        return self.n_joints

    def to_dict(self):
        return {
            "n_markers": self.n_markers,
            "joint_names": list(self.joint_names),
            "joint_parents": [int(p) for p in self.joint_parents],
            "marker_edges": self.marker_edges.tolist(),
            "joint_edges": self.joint_edges.tolist(),
            "cross_pairs": self.cross_pairs.tolist(),
            "threshold": float(self.threshold),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            n_markers=doc["n_markers"],
            joint_names=doc["joint_names"],
            joint_parents=doc["joint_parents"],
            marker_edges=np.asarray(doc["marker_edges"], int).reshape(-1, 2),
            joint_edges=np.asarray(doc["joint_edges"], int).reshape(-1, 2),
            cross_pairs=np.asarray(doc["cross_pairs"], int).reshape(-1, 2),
            threshold=doc["threshold"],
        )


def build_hetero_graph(layout, skeleton, table, threshold=None):
    """Assemble the solver graph from a rig and a neighbor table.

    Parameters
    ----------
    layout : MarkerLayout
    skeleton : Skeleton
    table : NeighborTable
        Marker edges are its neighbor relation, symmetrized.
    threshold : float, optional
        Cross-edge distance cut in cm; defaults to 1.5x the mean bone
        length. A marker whose rest-pose distance to every joint exceeds the
        cut still gets one edge to its nearest joint so no marker is
        isolated from the joint side.
    """
    m = layout.n_markers
    if len(table.neighbors) != m:
        raise ValidationError("neighbor table does not match layout")
    if threshold is None:
        threshold = DEFAULT_THRESHOLD_SCALE * skeleton.mean_bone_length()
    if threshold <= 0:
        raise ValidationError("threshold must be > 0")

    marker = marker_edges_from_table(table)

    j = skeleton.n_joints
    g = j  # translation node index in the joint node set
    joint = {(i, i) for i in range(j + 1)}
    for c in range(1, j):
        p = int(skeleton.parents[c])
        joint.add((c, p))
        joint.add((p, c))
    for c in range(j):
        joint.add((g, c))
        joint.add((c, g))

    mpos = layout.tpose_positions(skeleton)
    jpos = skeleton.tpose_positions()
    dist = np.linalg.norm(mpos[:, None, :] - jpos[None, :, :], axis=-1)
    cross = set()
    for i in range(m):
        close = np.flatnonzero(dist[i] < threshold)
        if close.size == 0:
            close = [int(np.argmin(dist[i]))]
        for c in close:
            cross.add((i, int(c)))

    return HeteroGraph(
        n_markers=m,
        joint_names=skeleton.joint_names,
        joint_parents=skeleton.parents,
        marker_edges=marker,
        joint_edges=np.asarray(sorted(joint), int),
        cross_pairs=np.asarray(sorted(cross), int),
        threshold=float(threshold),
    )


def marker_edges_from_table(table):
    """Directed (dst, src) marker edges: neighbor relation symmetrized,
    plus a self edge per marker, sorted."""
    edges = {(i, i) for i in range(len(table.neighbors))}
    for i, nbrs in enumerate(table.neighbors):
        for j in nbrs:
            edges.add((i, j))
            edges.add((j, i))
    return np.asarray(sorted(edges), int)


def cross_conv_edges(graph):
    """Directed edge list for the branch that mixes markers into joints.

    Node order: markers, then joints, then the translation node. Contains
    self-edges for every node, both directions of each cross pair, and the
    translation node's wiring to every marker and joint.
    """
    m, j = graph.n_markers, graph.n_joints
    g = m + j
    edges = {(n, n) for n in range(m + j + 1)}
    for mk, jt in graph.cross_pairs:
        edges.add((m + jt, mk))
        edges.add((mk, m + jt))
    for n in range(m + j):
        edges.add((g, n))
        edges.add((n, g))
    return np.asarray(sorted(edges), int)
