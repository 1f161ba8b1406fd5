import numpy as np
import pytest

from expertq.nn import mse_loss
from expertq.nn.layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    DuelingHead,
    Flatten,
    ReLU,
    Sigmoid,
)
from expertq.nn.network import Network, build_dueling_network, build_q_network


def fd_layer_grads(layer, x, dout, train=True, h=1e-6):
    """Central-difference gradients of sum(out * dout) for every param."""
    fd = []
    for p in layer.params:
        g = np.zeros_like(p)
        flat_p, flat_g = p.reshape(-1), g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = float(np.sum(layer.forward(x, train) * dout))
            flat_p[i] = orig - h
            down = float(np.sum(layer.forward(x, train) * dout))
            flat_p[i] = orig
            flat_g[i] = (up - down) / (2 * h)
        fd.append(g)
    return fd


def fd_input_grad(layer, x, dout, train=True, h=1e-6):
    g = np.zeros_like(x)
    flat_x, flat_g = x.reshape(-1), g.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        up = float(np.sum(layer.forward(x, train) * dout))
        flat_x[i] = orig - h
        down = float(np.sum(layer.forward(x, train) * dout))
        flat_x[i] = orig
        flat_g[i] = (up - down) / (2 * h)
    return g


def check_layer_gradients(layer, x, rtol=1e-6):
    rng = np.random.default_rng(1)
    out = layer.forward(x, True)
    dout = rng.standard_normal(out.shape)
    dx = layer.backward(dout)
    assert np.allclose(dx, fd_input_grad(layer, x, dout), rtol=rtol, atol=1e-8)
    for got, want in zip(layer.grads, fd_layer_grads(layer, x, dout)):
        assert np.allclose(got, want, rtol=rtol, atol=1e-8)


def test_conv2d_shapes_and_chain():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 8, 8, 2)).astype(np.float32)
    conv = Conv2D(2, 7, 3, pad=1, rng=rng)
    assert conv.forward(x, False).shape == (5, 8, 8, 7)
    # unpadded convs shrink 8 -> 6 -> 4 -> 2
    shapes = []
    h = rng.standard_normal((3, 8, 8, 4)).astype(np.float32)
    for _ in range(3):
        layer = Conv2D(h.shape[-1], 4, 3, pad=0, rng=rng)
        h = layer.forward(h, False)
        shapes.append(h.shape[1])
    assert shapes == [6, 4, 2]


def test_conv2d_gradients():
    rng = np.random.default_rng(3)
    conv = Conv2D(3, 4, 3, pad=1, rng=rng, dtype=np.float64)
    x = rng.standard_normal((2, 5, 5, 3))
    check_layer_gradients(conv, x)


def test_conv2d_known_answer():
    # identity-ish kernel: single weight at the center tap copies the input
    conv = Conv2D(1, 1, 3, pad=1, dtype=np.float64)
    conv.params[0][4, 0] = 1.0  # center of the 3x3 patch, channel 0
    conv.params[1][0] = 2.5
    x = np.arange(16, dtype=np.float64).reshape(1, 4, 4, 1)
    out = conv.forward(x, False)
    assert np.allclose(out, x + 2.5)


def test_batchnorm_normalizes_in_train_mode():
    rng = np.random.default_rng(5)
    bn = BatchNorm(6, dtype=np.float64)
    x = 10.0 * rng.standard_normal((64, 4, 4, 6)) + 3.0
    out = bn.forward(x, True)
    m = out.reshape(-1, 6)
    assert np.abs(m.mean(axis=0)).max() < 1e-6
    assert np.abs(m.var(axis=0) - 1.0).max() < 1e-6


def test_batchnorm_running_stats_feed_inference():
    rng = np.random.default_rng(6)
    bn = BatchNorm(3, momentum=0.5, dtype=np.float64)
    x = rng.standard_normal((200, 2, 2, 3)) * 4.0 + 1.0
    for _ in range(60):
        bn.forward(x, True)
    out = bn.forward(x, False)
    m = out.reshape(-1, 3)
    assert np.abs(m.mean(axis=0)).max() < 0.05
    assert np.abs(m.std(axis=0) - 1.0).max() < 0.05


def test_batchnorm_gradients():
    rng = np.random.default_rng(7)
    bn = BatchNorm(4, dtype=np.float64)
    bn.params[0][...] = rng.uniform(0.5, 1.5, 4)
    bn.params[1][...] = rng.standard_normal(4)
    x = rng.standard_normal((6, 3, 3, 4)) * 2.0
    check_layer_gradients(bn, x, rtol=1e-5)


def test_activations():
    relu, sig = ReLU(), Sigmoid()
    x = np.array([[-2.0, 0.0, 3.0]])
    assert np.array_equal(relu.forward(x.copy(), False), [[0.0, 0.0, 3.0]])
    s = sig.forward(x, False)
    assert np.allclose(s, 1 / (1 + np.exp(-x)))
    rng = np.random.default_rng(8)
    xr = rng.standard_normal((4, 9)) + 0.1  # keep clear of the ReLU kink
    check_layer_gradients(ReLU(), xr)
    check_layer_gradients(Sigmoid(), xr)


def test_dense_gradients_and_shapes():
    rng = np.random.default_rng(9)
    dense = Dense(12, 7, rng=rng, dtype=np.float64)
    x = rng.standard_normal((5, 12))
    assert dense.forward(x, False).shape == (5, 7)
    check_layer_gradients(dense, x)


def test_flatten_round_trip():
    f = Flatten()
    x = np.arange(24.0).reshape(2, 2, 3, 2)
    out = f.forward(x, True)
    assert out.shape == (2, 12)
    assert np.array_equal(f.backward(out), x)


def test_dropout_fraction_and_scaling():
    drop = Dropout(0.3, rng=np.random.default_rng(10))
    x = np.ones((100, 100), dtype=np.float32)
    out = drop.forward(x, True)
    zeros = float((out == 0).mean())
    assert abs(zeros - 0.3) < 0.02
    survivors = out[out != 0]
    assert np.allclose(survivors, 1.0 / 0.7)
    # inference: identity, no rescaling needed
    assert np.array_equal(drop.forward(x, False), x)
    dout = np.ones_like(x)
    drop.forward(x, True)
    dx = drop.backward(dout)
    assert set(np.unique(dx)) <= {np.float32(0.0), np.float32(1 / 0.7)}


def test_dueling_head_mean_cancellation():
    rng = np.random.default_rng(11)
    head = DuelingHead(6, 65, dtype=np.float64)
    head.params[2][...] = rng.standard_normal((6, 1))
    head.params[3][0] = 0.25
    # zero action weights with constant bias c: output is v everywhere
    head.params[1][...] = 3.0
    x = rng.standard_normal((4, 6))
    out = head.forward(x, False)
    v = x @ head.params[2] + head.params[3]
    assert np.allclose(out, np.repeat(v, 65, axis=1))
    # mean over actions of (o - v) vanishes
    head.params[0][...] = rng.standard_normal((6, 65))
    out = head.forward(x, False)
    assert np.allclose((out - v).mean(axis=1), 0.0, atol=1e-12)


def test_dueling_head_matches_scalar_reference():
    rng = np.random.default_rng(12)
    head = DuelingHead(5, 9, rng=rng, dtype=np.float64)
    x = rng.standard_normal((3, 5))
    out = head.forward(x, False)
    wa, ba, ws, bs = head.params
    for n in range(3):
        a = [sum(x[n, k] * wa[k, i] for k in range(5)) + ba[i] for i in range(9)]
        v = sum(x[n, k] * ws[k, 0] for k in range(5)) + bs[0]
        mean_a = sum(a) / 9
        for i in range(9):
            assert out[n, i] == pytest.approx(a[i] - mean_a + v, rel=1e-12)


def test_dueling_head_gradients():
    rng = np.random.default_rng(13)
    head = DuelingHead(5, 9, rng=rng, dtype=np.float64)
    x = rng.standard_normal((4, 5))
    check_layer_gradients(head, x)


def test_mse_loss():
    loss, grad = mse_loss(np.array([1.0, 0.0]), np.array([0.0, 0.0]))
    assert loss == pytest.approx(0.5)
    assert np.allclose(grad, [1.0, 0.0])
    same = np.array([2.0, -1.0, 3.0])
    loss, grad = mse_loss(same, same.copy())
    assert loss == 0.0 and not grad.any()
    with pytest.raises(ValueError):
        mse_loss(np.zeros(3), np.zeros(4))
    # gradient vs central differences
    rng = np.random.default_rng(14)
    pred, target = rng.standard_normal(12), rng.standard_normal(12)
    _, grad = mse_loss(pred, target)
    for i in range(12):
        bumped = pred.copy()
        bumped[i] += 1e-6
        up = mse_loss(bumped, target)[0]
        bumped[i] -= 2e-6
        down = mse_loss(bumped, target)[0]
        assert grad[i] == pytest.approx((up - down) / 2e-6, rel=1e-5)


def test_backbone_output_shape_and_codomain():
    net = build_q_network(seed=0)
    x = (np.random.default_rng(15).random((64, 2, 8, 8)) < 0.3).astype(np.float32)
    # run the stack up to (and including) the final sigmoid + dropout
    h = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
    for layer in net.layers[:-1]:
        h = layer.forward(h, False)
    assert h.shape == (64, 512)
    assert h.min() > 0.0 and h.max() < 1.0
    assert net.forward(x).shape == (64, 65)


def test_heads_zero_weights_zero_output():
    for build in (build_q_network, build_dueling_network):
        net = build(seed=1)
        head = net.layers[-1]
        for p in head.params:
            p[...] = 0.0
        x = (np.random.default_rng(16).random((3, 2, 8, 8)) < 0.3).astype(np.float32)
        assert not net.forward(x).any()
