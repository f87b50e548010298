"""Marker-to-skeleton solving network, loss, and training loop.

Per frame, marker features pass through an intra-marker convolution stack,
then split into a global branch (flattened features through residual
blocks) and a local branch (cross-graph convolutions that mix marker
features into joint nodes). Joint nodes receive the concatenation of both
and a joint-graph convolution stack emits nine rotation entries plus a
three-entry bone offset per joint; the translation node's first three
outputs are the root translation. Rotations are orthonormalized and bone
offsets averaged over frames only at solve time, never during training.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nnkit as nk
from .errors import ValidationError
from .graph import HeteroGraph, cross_conv_edges
from .rotation import gram_schmidt_rotation
from .sequence import MarkerSequence
from .skeleton import Motion, Skeleton, forward_kinematics
from .align import motion_from_local

DEFAULT_LOSS_WEIGHTS = (1.0, 1.0, 0.1)  # rotation/translation, offsets, FK


@dataclass(frozen=True)
class SolverConfig:
    marker_widths: tuple = (64, 64, 64)
    global_width: int = 256
    global_blocks: int = 2
    global_feature: int = 64
    local_widths: tuple = (64, 64)
    joint_widths: tuple = (64, 64)
    marker_mode: str = "conv"  # "conv" or "residual" (ablation variant)

    def __post_init__(self):
        if self.marker_mode not in ("conv", "residual"):
            raise ValidationError(f"unknown marker_mode {self.marker_mode!r}")
        if len(self.marker_widths) < 1 or len(self.local_widths) < 1:
            raise ValidationError("width lists must be non-empty")

    def to_dict(self):
        return {
            "marker_widths": list(self.marker_widths),
            "global_width": self.global_width,
            "global_blocks": self.global_blocks,
            "global_feature": self.global_feature,
            "local_widths": list(self.local_widths),
            "joint_widths": list(self.joint_widths),
            "marker_mode": self.marker_mode,
        }

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        for key in ("marker_widths", "local_widths", "joint_widths"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)


class SolverNet:
    """One network instance per stream (body, left hand, right hand)."""

    OUT_PER_JOINT = 12  # 9 rotation entries + 3 offset entries

    def __init__(self, graph, config=SolverConfig(), rng=None, zero=False):
        self.graph = graph
        self.config = config
        m, j = graph.n_markers, graph.n_joints
        widths = [4, *config.marker_widths]
        self.marker_layers = []
        if config.marker_mode == "conv":
            for a, b in zip(widths[:-1], widths[1:]):
                self.marker_layers.append(
                    nk.GraphConv(m, graph.marker_edges, a, b, rng, zero)
                )
        else:
            # ablation: no spatial mixing, shared per-node residual stack
            self.marker_layers.append(nk.Linear(4, widths[-1], rng, zero))
            for _ in range(len(config.marker_widths) - 1):
                self.marker_layers.append(nk.ResidualBlock(widths[-1], rng, zero))
        mw = widths[-1]
        self.global_in = nk.Linear(m * mw, config.global_width, rng, zero)
        self.global_blocks = [
            nk.ResidualBlock(config.global_width, rng, zero)
            for _ in range(config.global_blocks)
        ]
        self.global_out = nk.Linear(config.global_width, config.global_feature, rng, zero)
        self._cross_edges = cross_conv_edges(graph)
        n_cross = m + j + 1
        lw = [mw, *config.local_widths]
        self.local_layers = [
            nk.GraphConv(n_cross, self._cross_edges, a, b, rng, zero)
            for a, b in zip(lw[:-1], lw[1:])
        ]
        jw = [config.local_widths[-1] + config.global_feature, *config.joint_widths,
              self.OUT_PER_JOINT]
        self.joint_layers = [
            nk.GraphConv(j + 1, graph.joint_edges, a, b, rng, zero)
            for a, b in zip(jw[:-1], jw[1:])
        ]
        # input/output standardization; identity until set by training
        self.in_mean = np.zeros(4)
        self.in_std = np.ones(4)
        self.out_mean = np.zeros((j + 1, self.OUT_PER_JOINT))
        self.out_std = np.ones((j + 1, self.OUT_PER_JOINT))

    def params(self):
        out = {}
        for i, layer in enumerate(self.marker_layers):
            out.update(layer.named_params(f"marker{i}"))
        out.update(self.global_in.named_params("global_in"))
        for i, blk in enumerate(self.global_blocks):
            out.update(blk.named_params(f"global{i}"))
        out.update(self.global_out.named_params("global_out"))
        for i, layer in enumerate(self.local_layers):
            out.update(layer.named_params(f"local{i}"))
        for i, layer in enumerate(self.joint_layers):
            out.update(layer.named_params(f"joint{i}"))
        return out

    def forward(self, x):
        """x: Tensor (B, M, 4) -> (joint outputs (B, J, 12), trans (B, 3))."""
        g = self.graph
        m, j = g.n_markers, g.n_joints
        b = x.shape[0]
        x = (x - self.in_mean) * (1.0 / self.in_std)
        h = x
        for layer in self.marker_layers:
            h = nk.leaky_relu(layer.forward(h), nk.LEAKY_SLOPE)
        flat = nk.reshape(h, (b, m * h.shape[2]))
        gfeat = nk.leaky_relu(self.global_in.forward(flat), nk.LEAKY_SLOPE)
        for blk in self.global_blocks:
            gfeat = blk.forward(gfeat)
        gvec = self.global_out.forward(gfeat)  # (B, Gf)
        pad = nk.Tensor(np.zeros((b, j + 1, h.shape[2])))
        c = nk.concat([h, pad], axis=1)
        for layer in self.local_layers:
            c = nk.leaky_relu(layer.forward(c), nk.LEAKY_SLOPE)
        local = nk.narrow(c, 1, m, j + 1)  # joint + translation rows
        tile = nk.Tensor(np.zeros((b, j + 1, gvec.shape[1])))
        gtile = tile + nk.reshape(gvec, (b, 1, gvec.shape[1]))
        z = nk.concat([local, gtile], axis=2)
        for layer in self.joint_layers[:-1]:
            z = nk.leaky_relu(layer.forward(z), nk.LEAKY_SLOPE)
        z = self.joint_layers[-1].forward(z)
        z = z * self.out_std + self.out_mean
        joints = nk.narrow(z, 1, 0, j)
        gnode = nk.reshape(nk.narrow(z, 1, j, 1), (b, self.OUT_PER_JOINT))
        trans = nk.narrow(gnode, 1, 0, 3)
        return joints, trans


def sequence_inputs(seq):
    """(T, M, 4) network input: positions with the visibility flag appended.

    Positions at occluded entries are expected to carry fill estimates; any
    remaining NaN becomes 0 (with the flag already marking it untrusted).
    """
    pos = np.nan_to_num(np.asarray(seq.positions, float), nan=0.0)
    flags = seq.visibility.astype(float)[:, :, None]
    return np.concatenate([pos, flags], axis=2)


def solve_frames(net, positions, visibility):
    """Raw per-frame outputs (no orthonormalization, no averaging).

    Returns (rotations (B, J, 3, 3), offsets (B, J, 3), trans (B, 3)) as
    plain arrays.
    """
    positions = np.nan_to_num(np.asarray(positions, float), nan=0.0)
    if positions.ndim == 2:
        positions = positions[None]
        visibility = np.asarray(visibility)[None]
    b = positions.shape[0]
    x = np.concatenate(
        [positions, np.asarray(visibility, float)[:, :, None]], axis=2
    )
    joints, trans = net.forward(nk.Tensor(x))
    j = net.graph.n_joints
    raw = joints.data
    rot = raw[:, :, :9].reshape(b, j, 3, 3)
    off = raw[:, :, 9:]
    return rot, off, trans.data


def solve_frame(net, positions, visibility):
    """Single-frame convenience wrapper around :func:`solve_frames`."""
    rot, off, trans = solve_frames(net, positions, visibility)
    return rot[0], off[0], trans[0]


def solve_sequence(net, seq, series=None):
    """Solve a local-space sequence into a (Motion, Skeleton) pair.

    Rotations are projected to proper rotations by Gram-Schmidt; bone
    offsets are averaged over frames into one skeleton (root offset pinned
    to zero). When ``series`` (the reference frames used to localize the
    input) is given, the root translation and root rotation are composed
    back into world space.
    """
    if seq.n_markers != net.graph.n_markers:
        raise ValidationError(
            f"sequence has {seq.n_markers} markers, graph {net.graph.n_markers}"
        )
    rot_raw, off, trans = solve_frames(net, seq.positions, seq.visibility)
    t, j = rot_raw.shape[:2]
    rot = np.empty_like(rot_raw)
    for ti in range(t):
        for ji in range(j):
            rot[ti, ji] = gram_schmidt_rotation(rot_raw[ti, ji])
    offsets = off.mean(axis=0)
    offsets[0] = 0.0
    skeleton = Skeleton(net.graph.joint_names, net.graph.joint_parents, offsets)
    motion = Motion(trans, rot)
    if series is not None:
        motion = motion_from_local(motion, series)
    return motion, skeleton


# -- differentiable FK and loss -------------------------------------------


def fk_tensor(rot, offsets, trans, parents):
    """Forward kinematics inside the autodiff graph.

    Parameters
    ----------
    rot : Tensor (B, J, 9)
        Raw local rotation entries (used as-is, not orthonormalized).
    offsets : Tensor (B, J, 3)
        Per-frame bone offsets.
    trans : Tensor (B, 3)
        Root translation.
    parents : (J,) int array

    Returns
    -------
    Tensor (B, J, 3)
    """
    b, j = rot.shape[0], rot.shape[1]
    mats = nk.reshape(rot, (b, j, 3, 3))
    glob = [None] * j
    rel = [None] * j
    glob[0] = nk.reshape(nk.narrow(mats, 1, 0, 1), (b, 3, 3))
    rel[0] = nk.Tensor(np.zeros((b, 1, 3)))
    for i in range(1, j):
        p = int(parents[i])
        r_i = nk.reshape(nk.narrow(mats, 1, i, 1), (b, 3, 3))
        off_i = nk.reshape(nk.narrow(offsets, 1, i, 1), (b, 3, 1))
        step = nk.reshape(nk.matmul(glob[p], off_i), (b, 1, 3))
        rel[i] = rel[p] + step
        glob[i] = nk.matmul(glob[p], r_i)
    pos = nk.concat(rel, axis=1)
    return pos + nk.reshape(trans, (b, 1, 3))


def solving_loss(pred, truth, parents, weights=DEFAULT_LOSS_WEIGHTS):
    """Weighted L1 training loss.

    ``pred`` is (rot (B, J, 9) Tensor, offsets (B, J, 3) Tensor,
    trans (B, 3) Tensor); ``truth`` the same shapes as arrays (offsets may
    be (J, 3), broadcast over frames). Three mean-L1 terms: motion data
    (rotation entries and root translation together), bone offsets, and
    joint positions from differentiable FK on both sides.
    """
    w_m, w_s, w_fk = weights
    rot, off, trans = pred
    rot_t, off_t, trans_t = truth
    rot_t = np.asarray(rot_t, float)
    off_t = np.broadcast_to(np.asarray(off_t, float), off.shape).copy()
    trans_t = np.asarray(trans_t, float)

    diff_m = nk.tsum(nk.tabs(rot - rot_t)) + nk.tsum(nk.tabs(trans - trans_t))
    n_m = rot_t.size + trans_t.size
    term_m = diff_m * (1.0 / n_m)
    term_s = nk.tmean(nk.tabs(off - off_t))
    fk_pred = fk_tensor(rot, off, trans, parents)
    fk_true = _fk_numpy(rot_t, off_t, trans_t, parents)
    term_fk = nk.tmean(nk.tabs(fk_pred - fk_true))
    return w_m * term_m + w_s * term_s + w_fk * term_fk


def _fk_numpy(rot9, offsets, trans, parents):
    b, j = rot9.shape[:2]
    mats = rot9.reshape(b, j, 3, 3)
    glob = np.empty((b, j, 3, 3))
    rel = np.zeros((b, j, 3))
    glob[:, 0] = mats[:, 0]
    for i in range(1, j):
        p = int(parents[i])
        rel[:, i] = rel[:, p] + np.einsum("bij,bj->bi", glob[:, p], offsets[:, i])
        glob[:, i] = np.matmul(glob[:, p], mats[:, i])
    return rel + trans[:, None, :]


def motion_targets(motion, skeleton):
    """(rot9 (T, J, 9), offsets (J, 3), trans (T, 3)) training targets."""
    t, j = motion.n_frames, motion.n_joints
    rot9 = np.asarray(motion.rotations).reshape(t, j, 9)
    return rot9, np.asarray(skeleton.offsets), np.asarray(motion.root_translation)


@dataclass
class TrainResult:
    losses: list = field(default_factory=list)

    @property
    def final_loss(self):
        return self.losses[-1] if self.losses else float("nan")


def _standardize(net, x, rot9, offsets, trans):
    """Fit the net's input/output standardization constants to the data.

    ``offsets`` here is the full (B, J, 3) per-frame target array.
    """
    flat = x.reshape(-1, x.shape[-1])
    net.in_mean = flat.mean(axis=0)
    net.in_std = np.maximum(flat.std(axis=0), 1e-6)
    # the visibility flag stays raw
    net.in_mean[3] = 0.0
    net.in_std[3] = 1.0
    j = rot9.shape[1]
    out_mean = np.zeros((j + 1, SolverNet.OUT_PER_JOINT))
    out_std = np.ones((j + 1, SolverNet.OUT_PER_JOINT))
    out_mean[:j, :9] = rot9.mean(axis=0)
    out_std[:j, :9] = np.maximum(rot9.std(axis=0), 1e-3)
    out_mean[:j, 9:] = offsets.mean(axis=0)
    out_std[:j, 9:] = np.maximum(offsets.std(axis=0), 1e-3)
    out_mean[j, :3] = trans.mean(axis=0)
    out_std[j, :3] = np.maximum(trans.std(axis=0), 1e-3)
    net.out_mean = out_mean
    net.out_std = out_std


def train_solver(
    net,
    dataset,
    steps,
    lr=1e-3,
    weights=DEFAULT_LOSS_WEIGHTS,
    log_every=0,
    log_fn=None,
):
    """Full-batch Adam training on (sequence, motion, skeleton) triples.

    Sequences and motions must already be in the stream's local space with
    matching frame counts. Frames from all triples are concatenated into
    one batch; training is fully deterministic given the initial net.
    """
    xs, rots, offs, transs = [], [], [], []
    parents = net.graph.joint_parents
    for seq, motion, skeleton in dataset:
        if motion.n_frames != seq.n_frames:
            raise ValidationError("sequence/motion frame counts disagree")
        x = sequence_inputs(seq)
        rot9, off, trans = motion_targets(motion, skeleton)
        xs.append(x)
        rots.append(rot9)
        offs.append(np.broadcast_to(off, (rot9.shape[0],) + off.shape))
        transs.append(trans)
    x = np.concatenate(xs)
    rot_t = np.concatenate(rots)
    off_t = np.concatenate(offs)
    trans_t = np.concatenate(transs)
    _standardize(net, x, rot_t, off_t, trans_t)
    params = net.params()
    opt = nk.Adam(params, lr=lr)
    result = TrainResult()
    x_in = nk.Tensor(x)
    b, j = rot_t.shape[0], rot_t.shape[1]
    for step in range(steps):
        opt.zero_grad()
        joints, trans = net.forward(x_in)
        rot = nk.narrow(joints, 2, 0, 9)
        off = nk.narrow(joints, 2, 9, 3)
        loss = solving_loss((rot, off, trans), (rot_t, off_t, trans_t), parents, weights)
        loss.backward()
        opt.step()
        result.losses.append(loss.item())
        if log_every and log_fn and (step % log_every == 0 or step == steps - 1):
            log_fn(step, result.losses[-1])
    return result


# -- persistence -----------------------------------------------------------


def save_solver(path, net, extra=None):
    """Write the net (architecture, graph, parameters, statistics) as JSON.

    ``extra`` adds caller metadata (marker names, stream, ...) to the
    manifest; it may not shadow the structural keys.
    """
    manifest = {
        "kind": "solver",
        "config": net.config.to_dict(),
        "graph": net.graph.to_dict(),
    }
    if extra:
        clash = set(extra) & set(manifest)
        if clash:
            raise ValidationError(f"extra manifest keys shadow {sorted(clash)}")
        manifest.update(extra)
    blob = dict(net.params())
    blob["stats.in_mean"] = net.in_mean
    blob["stats.in_std"] = net.in_std
    blob["stats.out_mean"] = net.out_mean
    blob["stats.out_std"] = net.out_std
    nk.save_params(path, manifest, blob)


def load_solver(path):
    manifest, blob = nk.load_params(path)
    if manifest.get("kind") != "solver":
        raise ValidationError(f"not a solver file: kind={manifest.get('kind')!r}")
    graph = HeteroGraph.from_dict(manifest["graph"])
    config = SolverConfig.from_dict(manifest["config"])
    net = SolverNet(graph, config, zero=True)
    net.in_mean = blob.pop("stats.in_mean")
    net.in_std = blob.pop("stats.in_std")
    net.out_mean = blob.pop("stats.out_mean")
    net.out_std = blob.pop("stats.out_std")
    params = net.params()
    missing = set(params) - set(blob)
    if missing:
        raise ValidationError(f"parameter file is missing {sorted(missing)[:3]}")
    for name, tensor in params.items():
        arr = blob[name]
        if arr.shape != tensor.data.shape:
            raise ValidationError(f"shape mismatch for {name}")
        tensor.data = arr.copy()
    return net, manifest
