"""Minimal reverse-mode autodiff on float64 numpy arrays.

Every op returns a new :class:`Tensor` holding the forward value and a
closure that routes the incoming gradient to its parents. ``backward`` on a
scalar loss walks the graph once in reverse topological order. Nothing here
is clever: the goal is a small, checkable core whose gradients agree with
central finite differences to high precision.
"""

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = tuple(p for p in parents if p.requires_grad)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def detach(self):
        return Tensor(self.data)

    def item(self):
        return float(self.data)

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar loss")
        topo = []
        visited = {id(self)}
        stack = [(self, iter(self._parents))]
        while stack:
            node, it = stack[-1]
            advanced = False
            for p in it:
                if id(p) not in visited:
                    visited.add(id(p))
                    stack.append((p, iter(p._parents)))
                    advanced = True
                    break
            if not advanced:
                topo.append(node)
                stack.pop()
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operators ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# elementwise --------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def tabs(a):
    a = as_tensor(a)
    sign = np.sign(a.data)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * sign)

    return Tensor(np.abs(a.data), parents=(a,), backward=backward)


def sigmoid(a):
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        if a.requires_grad:
            _accum(a, g * s * (1.0 - s))

    return Tensor(s, parents=(a,), backward=backward)


def tanh(a):
    a = as_tensor(a)
    t = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * (1.0 - t * t))

    return Tensor(t, parents=(a,), backward=backward)


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    mask = np.where(a.data >= 0.0, 1.0, slope)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * mask)

    return Tensor(a.data * mask, parents=(a,), backward=backward)


# shape / reduction --------------------------------------------------------


def reshape(a, shape):
    a = as_tensor(a)
    old = a.data.shape

    def backward(g):
        if a.requires_grad:
            _accum(a, g.reshape(old))

    return Tensor(a.data.reshape(shape), parents=(a,), backward=backward)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return Tensor(out_data, parents=(a,), backward=backward)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def narrow(a, axis, start, length):
    """Contiguous slice along ``axis``."""
    a = as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def backward(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[idx] += g

    return Tensor(a.data[idx], parents=(a,), backward=backward)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0, *sizes])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _accum(t, g[tuple(idx)])

    return Tensor(out_data, parents=tuple(tensors), backward=backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for k, t in enumerate(tensors):
            if t.requires_grad:
                _accum(t, np.take(g, k, axis=axis))

    return Tensor(out_data, parents=tuple(tensors), backward=backward)


# linear algebra -----------------------------------------------------------


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must have ndim >= 2")
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            _accum(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accum(b, _unbroadcast(gb, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def _segment_add(dest, idx, vals):
    """``dest[:, idx[e]] += vals[:, e]`` via sorted segment sums.

    Much faster than ``np.add.at`` for the edge counts seen here.
    """
    order = np.argsort(idx, kind="stable")
    sidx = idx[order]
    svals = vals[:, order]
    starts = np.flatnonzero(np.r_[True, sidx[1:] != sidx[:-1]])
    dest[:, sidx[starts]] += np.add.reduceat(svals, starts, axis=1)


def graph_conv(x, w, b, src, dst, n_nodes):
    """Per-edge graph convolution: ``out_i = sum_{(i<-j)} W_ij x_j + b_i``.

    Every directed edge carries its own filter matrix; self-edges are the
    caller's responsibility (the graph builders always include them).

    Parameters
    ----------
    x : Tensor (B, N, in)
        Node features, batch-first.
    w : Tensor (E, out, in)
        One filter per directed edge, ordered like ``src``/``dst``.
    b : Tensor (N, out)
        Per-node bias.
    src, dst : (E,) int arrays
        Edge j -> i is ``src[e] = j``, ``dst[e] = i``.

    Returns
    -------
    Tensor (B, N, out)
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    src = np.asarray(src, dtype=int)
    dst = np.asarray(dst, dtype=int)
    xs = x.data[:, src, :]  # (B, E, in)
    # (E, B, in) @ (E, in, out) -> (E, B, out): one BLAS call per edge
    msg = np.matmul(xs.transpose(1, 0, 2), w.data.transpose(0, 2, 1))
    out_data = np.zeros((x.data.shape[0], n_nodes, w.data.shape[1]))
    _segment_add(out_data, dst, msg.transpose(1, 0, 2))
    out_data += b.data

    def backward(g):
        gm = g[:, dst, :]  # (B, E, out)
        if b.requires_grad:
            _accum(b, g.sum(axis=0))
        if w.requires_grad:
            gw = np.matmul(gm.transpose(1, 2, 0), xs.transpose(1, 0, 2))
            _accum(w, gw)
        if x.requires_grad:
            gxs = np.matmul(gm.transpose(1, 0, 2), w.data)  # (E, B, in)
            gx = np.zeros_like(x.data)
            _segment_add(gx, src, gxs.transpose(1, 0, 2))
            _accum(x, gx)

    return Tensor(out_data, parents=(x, w, b), backward=backward)
