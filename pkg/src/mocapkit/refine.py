"""Occlusion refinement: per-frame graph mixing plus a recurrent pass.

Gap filling produces geometric estimates; this stage learns to polish
them. A graph convolution spreads each frame's marker features across the
marker graph, a bidirectional recurrent layer integrates over time, and a
linear head emits one position correction per marker. The head starts at
zero, so a freshly built refiner is exactly the identity map. Corrections
are only ever applied where the visibility flag is down; measured samples
pass through untouched.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nnkit as nk
from .errors import ValidationError
from .solver import sequence_inputs


class RefinerNet:
    def __init__(self, n_markers, marker_edges, conv_width=64, rnn_width=128, rng=None):
        self.n_markers = n_markers
        self.marker_edges = np.asarray(marker_edges, dtype=int)
        self.conv_width = conv_width
        self.rnn_width = rnn_width
        self.conv = nk.GraphConv(n_markers, self.marker_edges, 4, conv_width, rng)
        self.rnn = nk.BiRecurrent(conv_width, rnn_width, rng)
        self.head = nk.Linear(2 * rnn_width, 3, zero=True)
        # input standardization; identity until set by training
        self.in_mean = np.zeros(4)
        self.in_std = np.ones(4)

    def params(self):
        out = {}
        out.update(self.conv.named_params("conv"))
        out.update(self.rnn.named_params("rnn"))
        out.update(self.head.named_params("head"))
        return out

    def forward(self, x):
        """x: Tensor (T, M, 4) -> per-marker corrections (T, M, 3)."""
        x = (x - self.in_mean) * (1.0 / self.in_std)
        h = nk.leaky_relu(self.conv.forward(x), nk.LEAKY_SLOPE)
        r = self.rnn.forward(h)
        return self.head.forward(r)


def refine(net, seq, mask=None):
    """Apply learned corrections to the occluded entries of ``seq``.

    ``mask`` defaults to the sequence's own occlusions (visibility == 0).
    Entries that are masked but still NaN (a fill that never happened) are
    left alone; a correction needs a base estimate to correct.
    """
    if seq.n_markers != net.n_markers:
        raise ValidationError(
            f"sequence has {seq.n_markers} markers, refiner expects {net.n_markers}"
        )
    offsets = net.forward(nk.Tensor(sequence_inputs(seq))).data
    if mask is None:
        mask = seq.visibility == 0
    mask = np.asarray(mask, dtype=bool)
    pos = np.array(seq.positions)
    usable = mask & np.isfinite(pos).all(axis=2)
    pos[usable] += offsets[usable]
    return seq.with_positions(pos)


def refiner_loss(offsets, positions, truth, mask):
    """Mean L1 over corrected coordinates at masked entries.

    ``offsets`` is the net output (T, M, 3) Tensor; ``positions`` the fill
    estimates fed to the net, ``truth`` the clean positions, ``mask`` the
    (T, M) occlusion flags. Unmasked entries contribute nothing, so the
    net is never rewarded for touching measured data.
    """
    mask3 = np.asarray(mask, dtype=float)[:, :, None]
    base = np.nan_to_num(np.asarray(positions, float), nan=0.0) - truth
    resid = (offsets + base) * mask3
    count = max(1.0, 3.0 * float(mask3.sum()))
    return nk.tsum(nk.tabs(resid)) * (1.0 / count)


@dataclass
class RefineTrainResult:
    losses: list = field(default_factory=list)

    @property
    def final_loss(self):
        return self.losses[-1] if self.losses else float("nan")


def _fit_input_stats(net, xs):
    flat = np.concatenate([x.reshape(-1, x.shape[-1]) for x in xs])
    net.in_mean = flat.mean(axis=0)
    net.in_std = np.maximum(flat.std(axis=0), 1e-6)
    net.in_mean[3] = 0.0
    net.in_std[3] = 1.0


def train_refiner(net, dataset, steps, lr=1e-3, log_every=0, log_fn=None):
    """Adam training on (filled sequence, clean sequence, mask) triples.

    Each step evaluates every sequence (the recurrent layer needs intact
    time axes, so sequences are never concatenated) and averages their
    losses. Deterministic given the initial net.
    """
    items = []
    for filled, clean, mask in dataset:
        if filled.n_frames != clean.n_frames or filled.n_markers != clean.n_markers:
            raise ValidationError("filled/clean sequence shapes disagree")
        x = sequence_inputs(filled)
        items.append((x, np.asarray(clean.positions, float), np.asarray(mask, bool)))
    _fit_input_stats(net, [x for x, _, _ in items])
    params = net.params()
    opt = nk.Adam(params, lr=lr)
    result = RefineTrainResult()
    inputs = [nk.Tensor(x) for x, _, _ in items]
    for step in range(steps):
        opt.zero_grad()
        total = None
        for x_in, (x, truth, mask) in zip(inputs, items):
            offsets = net.forward(x_in)
            term = refiner_loss(offsets, x[..., :3], truth, mask)
            total = term if total is None else total + term
        loss = total * (1.0 / len(items))
        loss.backward()
        opt.step()
        result.losses.append(loss.item())
        if log_every and log_fn and (step % log_every == 0 or step == steps - 1):
            log_fn(step, result.losses[-1])
    return result


# -- persistence -----------------------------------------------------------


def save_refiner(path, net, extra=None):
    manifest = {
        "kind": "refiner",
        "n_markers": net.n_markers,
        "conv_width": net.conv_width,
        "rnn_width": net.rnn_width,
        "marker_edges": net.marker_edges.tolist(),
    }
    if extra:
        clash = set(extra) & set(manifest)
        if clash:
            raise ValidationError(f"extra manifest keys shadow {sorted(clash)}")
        manifest.update(extra)
    blob = dict(net.params())
    blob["stats.in_mean"] = net.in_mean
    blob["stats.in_std"] = net.in_std
    nk.save_params(path, manifest, blob)


def load_refiner(path):
    manifest, blob = nk.load_params(path)
    if manifest.get("kind") != "refiner":
        raise ValidationError(f"not a refiner file: kind={manifest.get('kind')!r}")
    net = RefinerNet(
        manifest["n_markers"],
        np.asarray(manifest["marker_edges"], dtype=int),
        conv_width=manifest["conv_width"],
        rnn_width=manifest["rnn_width"],
    )
    net.in_mean = blob.pop("stats.in_mean")
    net.in_std = blob.pop("stats.in_std")
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
