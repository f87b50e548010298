"""Autodiff kit: op gradients, layers, Adam, parameter files."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mocapkit.errors import NumericsError, ValidationError
from mocapkit import nnkit as nk

GRAD_TOL = 1e-6


def tensor(data):
    return nk.Tensor(np.asarray(data, dtype=float), requires_grad=True)


# -- forward values --------------------------------------------------------


def test_arithmetic_forward():
    a = tensor([1.0, -2.0, 3.0])
    b = tensor([4.0, 5.0, 6.0])
    assert_allclose((a + b).data, [5.0, 3.0, 9.0])
    assert_allclose((a - b).data, [-3.0, -7.0, -3.0])
    assert_allclose((a * b).data, [4.0, -10.0, 18.0])
    assert_allclose((a / 2.0).data, [0.5, -1.0, 1.5])
    assert_allclose((-a).data, [-1.0, 2.0, -3.0])
    assert_allclose((1.0 - a).data, [0.0, 3.0, -2.0])
    assert_allclose(nk.tabs(a).data, [1.0, 2.0, 3.0])


def test_activation_forward():
    x = tensor([-1.0, 0.0, 2.0])
    assert_allclose(nk.sigmoid(x).data, 1.0 / (1.0 + np.exp([1.0, 0.0, -2.0])))
    assert_allclose(nk.tanh(x).data, np.tanh([-1.0, 0.0, 2.0]))
    assert_allclose(nk.leaky_relu(x, 0.2).data, [-0.2, 0.0, 2.0])


def test_reductions_and_shapes():
    x = tensor([[1.0, 2.0], [3.0, 4.0]])
    assert nk.tsum(x).data == pytest.approx(10.0)
    assert_allclose(nk.tsum(x, axis=0).data, [4.0, 6.0])
    assert_allclose(nk.tmean(x, axis=1).data, [1.5, 3.5])
    assert nk.tmean(x).item() == pytest.approx(2.5)
    assert nk.reshape(x, (4,)).shape == (4,)
    assert nk.narrow(x, 1, 1, 1).shape == (2, 1)
    assert nk.concat([x, x], axis=1).shape == (2, 4)
    assert nk.stack([x, x], axis=0).shape == (2, 2, 2)


def test_matmul_forward():
    a = tensor(np.arange(6.0).reshape(2, 3))
    b = tensor(np.arange(12.0).reshape(3, 4))
    assert_allclose(nk.matmul(a, b).data, a.data @ b.data)


def test_backward_through_shared_subexpression():
    a, b, c = tensor([2.0]), tensor([3.0]), tensor([5.0])
    out = a * b + a * c
    out.backward()
    assert_allclose(a.grad, [8.0])  # b + c
    assert_allclose(b.grad, [2.0])
    assert_allclose(c.grad, [2.0])


def test_backward_handles_deep_chains_iteratively():
    x = tensor([1.0])
    y = x
    for _ in range(3000):
        y = y + 0.0
    y.backward()
    assert_allclose(x.grad, [1.0])


# -- finite-difference gradients for every op ------------------------------


def check(build_loss, params, tol=GRAD_TOL):
    errors = nk.gradient_check(build_loss, params)
    worst = max(errors.values())
    assert worst < tol, errors


def test_grad_add_with_broadcast():
    a = tensor(np.linspace(-1, 1, 12).reshape(3, 4))
    b = tensor(np.linspace(2, 3, 4))
    check(lambda: nk.tsum((a + b) * (a + b)), {"a": a, "b": b})


def test_grad_mul_with_broadcast():
    a = tensor(np.linspace(0.5, 2, 12).reshape(3, 4))
    b = tensor(np.linspace(-2, -1, 4))
    check(lambda: nk.tsum(a * b * a), {"a": a, "b": b})


def test_grad_abs_away_from_zero():
    a = tensor([[1.5, -2.5], [0.75, -0.25]])
    check(lambda: nk.tsum(nk.tabs(a)), {"a": a})


def test_grad_activations():
    a = tensor(np.linspace(-2, 2, 9).reshape(3, 3) + 0.05)
    check(lambda: nk.tsum(nk.sigmoid(a) * nk.sigmoid(a)), {"a": a})
    check(lambda: nk.tsum(nk.tanh(a) * nk.tanh(a)), {"a": a})
    check(lambda: nk.tsum(nk.leaky_relu(a) * nk.leaky_relu(a)), {"a": a})


def test_grad_reshape_narrow_concat_stack():
    a = tensor(np.linspace(-1, 1, 8).reshape(2, 4))
    b = tensor(np.linspace(1, 2, 8).reshape(2, 4))

    def loss():
        r = nk.reshape(a, (4, 2))
        n = nk.narrow(b, 1, 1, 2)
        c = nk.concat([a, b], axis=1)
        s = nk.stack([a, b], axis=0)
        return nk.tsum(r * r) + nk.tsum(n * n) + nk.tsum(c * c) + nk.tsum(s * s)

    check(loss, {"a": a, "b": b})


def test_grad_reductions():
    a = tensor(np.linspace(-1, 1, 12).reshape(3, 4))
    check(lambda: nk.tsum(nk.tsum(a, axis=0, keepdims=True) * 2.0), {"a": a})
    check(lambda: nk.tsum(nk.tmean(a, axis=1) * nk.tmean(a, axis=1)), {"a": a})


def test_grad_matmul_2d_and_batched():
    a = tensor(np.linspace(-1, 1, 6).reshape(2, 3))
    b = tensor(np.linspace(1, 2, 12).reshape(3, 4))
    check(lambda: nk.tsum(nk.matmul(a, b) * nk.matmul(a, b)), {"a": a, "b": b})
    xb = tensor(np.linspace(-1, 1, 12).reshape(2, 2, 3))
    check(lambda: nk.tsum(nk.matmul(xb, b) * 0.5), {"x": xb, "b": b})


GC_EDGES = np.array([[0, 0], [1, 1], [2, 2], [3, 3], [0, 1], [1, 0], [2, 1], [3, 2]])


def test_graph_conv_matches_triple_loop():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(2, 4, 3))
    w = rng.normal(size=(len(GC_EDGES), 5, 3))
    b = rng.normal(size=(4, 5))
    out = nk.graph_conv(nk.Tensor(x), nk.Tensor(w), nk.Tensor(b),
                        GC_EDGES[:, 1], GC_EDGES[:, 0], 4)
    want = np.zeros((2, 4, 5))
    for bi in range(2):
        for e, (dst, src) in enumerate(GC_EDGES):
            want[bi, dst] += w[e] @ x[bi, src]
    want += b
    assert np.abs(out.data - want).max() < 1e-12


def test_grad_graph_conv():
    rng = np.random.default_rng(13)
    x = tensor(rng.normal(size=(2, 4, 3)))
    w = tensor(rng.normal(size=(len(GC_EDGES), 2, 3)))
    b = tensor(rng.normal(size=(4, 2)))

    def loss():
        out = nk.graph_conv(x, w, b, GC_EDGES[:, 1], GC_EDGES[:, 0], 4)
        return nk.tsum(out * out)

    check(loss, {"x": x, "w": w, "b": b})


# -- closed-form regression gradient ---------------------------------------


def test_linear_regression_gradient_closed_form():
    rng = np.random.default_rng(21)
    x = rng.normal(size=(5, 3))
    y = rng.normal(size=(5, 1))
    w = tensor(rng.normal(size=(3, 1)))
    resid = nk.matmul(nk.Tensor(x), w) - nk.Tensor(y)
    loss = nk.tsum(resid * resid)
    loss.backward()
    want = 2.0 * x.T @ (x @ w.data - y)
    assert np.abs(w.grad - want).max() < 1e-12


# -- layers ----------------------------------------------------------------


def test_linear_layer_gradients():
    rng = np.random.default_rng(31)
    layer = nk.Linear(3, 2, rng)
    x = tensor(rng.normal(size=(4, 3)))
    params = {"x": x, **layer.named_params("lin")}
    check(lambda: nk.tsum(layer.forward(x) * layer.forward(x)), params)


def test_residual_block_gradients_and_skip():
    rng = np.random.default_rng(32)
    block = nk.ResidualBlock(3, rng)
    x = tensor(rng.normal(size=(2, 3)))
    params = {"x": x, **block.named_params("blk")}
    check(lambda: nk.tsum(block.forward(x) * block.forward(x)), params)
    zero_block = nk.ResidualBlock(3, zero=True)
    out = zero_block.forward(nk.Tensor(np.ones((2, 3))))
    assert_allclose(out.data, 1.0)  # zero weights leave only the skip


def test_graph_conv_layer_gradients():
    rng = np.random.default_rng(33)
    layer = nk.GraphConv(4, GC_EDGES, 3, 2, rng)
    x = tensor(rng.normal(size=(2, 4, 3)))
    params = {"x": x, **layer.named_params("gc")}
    check(lambda: nk.tsum(layer.forward(x) * layer.forward(x)), params)


def test_birecurrent_gradients_and_shape():
    rng = np.random.default_rng(34)
    layer = nk.BiRecurrent(2, 3, rng)
    x = tensor(rng.normal(size=(4, 2, 2)))
    out = layer.forward(x)
    assert out.shape == (4, 2, 6)
    params = {"x": x, **layer.named_params("rnn")}
    check(lambda: nk.tsum(layer.forward(x) * layer.forward(x)), params)


def test_birecurrent_output_depends_on_both_directions():
    rng = np.random.default_rng(35)
    layer = nk.BiRecurrent(1, 2, rng)
    x = rng.normal(size=(5, 1, 1))
    base = layer.forward(nk.Tensor(x)).data
    bumped = x.copy()
    bumped[-1] += 1.0  # last step feeds the first output via the reverse pass
    assert np.abs(layer.forward(nk.Tensor(bumped)).data[0] - base[0]).max() > 1e-9


def test_zero_initialized_layers_output_zero():
    x = nk.Tensor(np.ones((2, 3)))
    assert_allclose(nk.Linear(3, 4, zero=True).forward(x).data, 0.0)
    gx = nk.Tensor(np.ones((1, 4, 3)))
    assert_allclose(nk.GraphConv(4, GC_EDGES, 3, 2, zero=True).forward(gx).data, 0.0)
    rx = nk.Tensor(np.ones((3, 2, 3)))
    assert_allclose(nk.BiRecurrent(3, 2, zero=True).forward(rx).data, 0.0)


def test_same_seed_gives_identical_layers():
    a = nk.Linear(3, 2, np.random.default_rng(99))
    b = nk.Linear(3, 2, np.random.default_rng(99))
    assert a.w.data.tobytes() == b.w.data.tobytes()


def test_graph_conv_rejects_bad_edges():
    with pytest.raises(ValidationError):
        nk.GraphConv(3, np.zeros((0, 2), dtype=int), 2, 2)
    with pytest.raises(ValidationError):
        nk.GraphConv(3, [[0, 5]], 2, 2)


# -- optimizer -------------------------------------------------------------


def test_adam_minimizes_quadratic():
    w = tensor([0.0])
    opt = nk.Adam({"w": w}, lr=0.05)
    for _ in range(2000):
        opt.zero_grad()
        diff = w - 3.0
        loss = nk.tsum(diff * diff)
        loss.backward()
        opt.step()
    assert abs(w.data[0] - 3.0) < 1e-6


def test_adam_is_deterministic():
    def train():
        rng = np.random.default_rng(17)
        layer = nk.Linear(3, 2, rng)
        x = nk.Tensor(rng.normal(size=(8, 3)))
        y = nk.Tensor(rng.normal(size=(8, 2)))
        opt = nk.Adam(layer.named_params("lin"), lr=1e-2)
        for _ in range(50):
            opt.zero_grad()
            r = layer.forward(x) - y
            nk.tsum(r * r).backward()
            opt.step()
        return layer.w.data.tobytes(), layer.b.data.tobytes()

    assert train() == train()


def test_adam_rejects_non_finite_gradients():
    w = tensor([1.0])
    opt = nk.Adam({"w": w})
    w.grad = np.array([np.inf])
    with pytest.raises(NumericsError):
        opt.step()


def test_adam_skips_parameters_without_gradients():
    w = tensor([1.0])
    opt = nk.Adam({"w": w})
    opt.step()  # no gradient: parameter must stay put
    assert_allclose(w.data, [1.0])


# -- parameter files -------------------------------------------------------


def test_params_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(55)
    params = {
        "layer.w": nk.Tensor(rng.normal(size=(3, 2))),
        "layer.b": rng.normal(size=2),
    }
    path = tmp_path / "model.json"
    nk.save_params(path, {"kind": "test", "widths": [3, 2]}, params)
    manifest, loaded = nk.load_params(path)
    assert manifest == {"kind": "test", "widths": [3, 2]}
    assert loaded["layer.w"].tobytes() == params["layer.w"].data.tobytes()
    assert loaded["layer.b"].tobytes() == np.asarray(params["layer.b"]).tobytes()


def test_params_file_is_byte_deterministic(tmp_path):
    params = {"w": np.linspace(0, 1, 7)}
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    nk.save_params(p1, {"k": 1}, params)
    nk.save_params(p2, {"k": 1}, params)
    assert p1.read_bytes() == p2.read_bytes()


def test_params_version_is_checked(tmp_path):
    path = tmp_path / "m.json"
    nk.save_params(path, {}, {"w": np.zeros(2)})
    text = path.read_text().replace('"format_version":1', '"format_version":9')
    path.write_text(text)
    with pytest.raises(ValidationError):
        nk.load_params(path)
