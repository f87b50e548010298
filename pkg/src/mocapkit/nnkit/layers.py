"""Layers: linear, per-edge graph convolution, residual block, bi-GRU.

All parameters are float64 tensors initialized from a caller-supplied
numpy Generator with uniform fan-in scaling, so identical seeds give
bit-identical models. ``params()`` returns a flat dict whose keys name every
parameter for the optimizer and for error reporting.
"""

import numpy as np

from ..errors import ValidationError
from . import tensor as T

LEAKY_SLOPE = 0.2


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(max(1, fan_in))
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    def params(self):
        raise NotImplementedError

    def named_params(self, prefix):
        return {f"{prefix}.{k}": v for k, v in self.params().items()}


class Linear(Layer):
    def __init__(self, in_width, out_width, rng=None, zero=False):
        if zero or rng is None:
            w = np.zeros((in_width, out_width))
            b = np.zeros(out_width)
        else:
            w = _uniform(rng, (in_width, out_width), in_width)
            b = np.zeros(out_width)
        self.w = T.Tensor(w, requires_grad=True)
        self.b = T.Tensor(b, requires_grad=True)

    def params(self):
        return {"w": self.w, "b": self.b}

    def forward(self, x):
        return T.matmul(x, self.w) + self.b


class ResidualBlock(Layer):
    """Two linear maps with a leaky nonlinearity and an identity skip."""

    def __init__(self, width, rng=None, zero=False):
        self.lin1 = Linear(width, width, rng, zero)
        self.lin2 = Linear(width, width, rng, zero)

    def params(self):
        out = {}
        out.update({f"lin1.{k}": v for k, v in self.lin1.params().items()})
        out.update({f"lin2.{k}": v for k, v in self.lin2.params().items()})
        return out

    def forward(self, x):
        h = T.leaky_relu(self.lin1.forward(x), LEAKY_SLOPE)
        return x + self.lin2.forward(h)


class GraphConv(Layer):
    """Graph convolution with a distinct filter and bias per directed edge.

    The edge list is fixed at construction. Fan-in scaling accounts for the
    typical number of incoming edges so deep stacks keep unit-scale
    activations.
    """

    def __init__(self, n_nodes, edges, in_width, out_width, rng=None, zero=False):
        edges = np.asarray(edges, dtype=int)
        if edges.ndim != 2 or edges.shape[1] != 2 or edges.shape[0] == 0:
            raise ValidationError("edges must be a non-empty (E, 2) array")
        if edges.min() < 0 or edges.max() >= n_nodes:
            raise ValidationError("edge index out of range")
        self.n_nodes = n_nodes
        self.dst = edges[:, 0].copy()
        self.src = edges[:, 1].copy()
        e = edges.shape[0]
        if zero or rng is None:
            w = np.zeros((e, out_width, in_width))
        else:
            mean_deg = max(1, int(round(e / n_nodes)))
            w = _uniform(rng, (e, out_width, in_width), in_width * mean_deg)
        self.w = T.Tensor(w, requires_grad=True)
        self.b = T.Tensor(np.zeros((n_nodes, out_width)), requires_grad=True)

    def params(self):
        return {"w": self.w, "b": self.b}

    def forward(self, x):
        return T.graph_conv(x, self.w, self.b, self.src, self.dst, self.n_nodes)


class BiRecurrent(Layer):
    """Bidirectional gated recurrent layer (GRU-style cell).

    Per direction and step: z = sigmoid, r = sigmoid, candidate = tanh with
    the reset gate applied to the hidden contribution, then
    ``h = (1 - z) * n + z * h``. Input gates for all steps are computed in
    one matmul. Output is the concatenation of both directions, width
    ``2 * hidden``.
    """

    def __init__(self, in_width, hidden, rng=None, zero=False):
        self.hidden = hidden

        def make(name):
            if zero or rng is None:
                wx = np.zeros((in_width, 3 * hidden))
                wh = np.zeros((hidden, 3 * hidden))
            else:
                wx = _uniform(rng, (in_width, 3 * hidden), in_width)
                wh = _uniform(rng, (hidden, 3 * hidden), hidden)
            return {
                f"{name}.wx": T.Tensor(wx, requires_grad=True),
                f"{name}.wh": T.Tensor(wh, requires_grad=True),
                f"{name}.bx": T.Tensor(np.zeros(3 * hidden), requires_grad=True),
            }

        self._p = {}
        self._p.update(make("fwd"))
        self._p.update(make("bwd"))

    def params(self):
        return dict(self._p)

    def _run(self, x, name, reverse):
        h = self.hidden
        wx, wh, bx = self._p[f"{name}.wx"], self._p[f"{name}.wh"], self._p[f"{name}.bx"]
        steps = x.shape[0]
        gates_x = T.matmul(x, wx) + bx  # (T, B, 3H)
        order = range(steps - 1, -1, -1) if reverse else range(steps)
        state = T.Tensor(np.zeros((x.shape[1], h)))
        outs = []
        for t in order:
            gx = T.reshape(T.narrow(gates_x, 0, t, 1), (x.shape[1], 3 * h))
            gh = T.matmul(state, wh)
            z = T.sigmoid(T.narrow(gx, 1, 0, h) + T.narrow(gh, 1, 0, h))
            r = T.sigmoid(T.narrow(gx, 1, h, h) + T.narrow(gh, 1, h, h))
            n = T.tanh(T.narrow(gx, 1, 2 * h, h) + r * T.narrow(gh, 1, 2 * h, h))
            state = (1.0 - z) * n + z * state
            outs.append(state)
        if reverse:
            outs.reverse()
        return T.stack(outs, axis=0)

    def forward(self, x):
        """x: (T, B, in) -> (T, B, 2 * hidden)."""
        fwd = self._run(x, "fwd", reverse=False)
        bwd = self._run(x, "bwd", reverse=True)
        return T.concat([fwd, bwd], axis=2)
