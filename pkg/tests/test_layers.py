"""
Finite-difference checks of every layer's backward pass.
"""

import numpy as np
import pytest

from src.models.layers import (
    LSTM,
    Conv1D,
    Dense,
    Flatten,
    ReLU,
    Reshape,
    Sequential,
    TimeDistributed,
    cross_entropy_loss,
    softmax,
    softmax_cross_entropy_grad,
)

EPS = 1e-6


def _loss(net, x, weights):
    return float(np.sum(net.forward(x) * weights))


def _check_gradients(net, x, rtol=1e-4, atol=1e-6):
    rng = np.random.default_rng(0)
    out = net.forward(x)
    weights = rng.standard_normal(out.shape)
    net.zero_grad()
    net.forward(x)
    dx = net.backward(weights)

    numeric_dx = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        saved = x[idx]
        x[idx] = saved + EPS
        up = _loss(net, x, weights)
        x[idx] = saved - EPS
        down = _loss(net, x, weights)
        x[idx] = saved
        numeric_dx[idx] = (up - down) / (2 * EPS)
    np.testing.assert_allclose(dx, numeric_dx, rtol=rtol, atol=atol)

    net.forward(x)
    net.backward(weights)
    grads = dict(net.named_gradients())
    for name, param in net.named_parameters():
        analytic = grads[name].copy()
        numeric = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            saved = param[idx]
            param[idx] = saved + EPS
            up = _loss(net, x, weights)
            param[idx] = saved - EPS
            down = _loss(net, x, weights)
            param[idx] = saved
            numeric[idx] = (up - down) / (2 * EPS)
        np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol, err_msg=name)


INSTANCES = range(20)


@pytest.mark.parametrize("seed", INSTANCES)
def test_dense_gradients(seed):
    rng = np.random.default_rng([1, seed])
    n_in, n_out, batch = (int(v) for v in rng.integers(1, 6, size=3))
    _check_gradients(Sequential([Dense(n_in, n_out, rng)]), rng.standard_normal((batch, n_in)))


@pytest.mark.parametrize("seed", INSTANCES)
def test_conv_gradients(seed):
    rng = np.random.default_rng([2, seed])
    length = int(rng.integers(3, 8))
    channels, filters = (int(v) for v in rng.integers(1, 4, size=2))
    width = int(rng.choice([1, 3]))
    net = Sequential([Reshape((length, channels)), Conv1D(channels, filters, width, length, rng), Flatten()])
    _check_gradients(net, rng.standard_normal((2, length * channels)))


def test_time_distributed_conv_gradients():
    rng = np.random.default_rng(3)
    net = Sequential([Reshape((3, 4, 1)), TimeDistributed(Conv1D(1, 2, 3, 4, rng), 3), Flatten()])
    _check_gradients(net, rng.standard_normal((2, 12)))


@pytest.mark.parametrize("seed", INSTANCES)
def test_lstm_gradients(seed):
    rng = np.random.default_rng([4, seed])
    n_in, hidden, steps = (int(v) for v in rng.integers(1, 5, size=3))
    net = Sequential([LSTM(n_in, hidden, steps, rng)])
    _check_gradients(net, rng.standard_normal((2, steps, n_in)))


def test_relu_stack_gradients():
    rng = np.random.default_rng(5)
    net = Sequential([Dense(4, 6, rng), ReLU(), Dense(6, 2, rng)])
    _check_gradients(net, rng.standard_normal((3, 4)))


def test_conv_same_padding_keeps_length():
    rng = np.random.default_rng(6)
    conv = Conv1D(2, 5, 3, 7, rng)
    assert conv.forward(rng.standard_normal((4, 7, 2))).shape == (4, 7, 5)
    assert conv.n_params == 3 * 2 * 5 + 5
    assert conv.macs == 7 * 6 * 5
    with pytest.raises(ValueError):
        Conv1D(1, 1, 4, 7, rng)


def test_lstm_parameter_count():
    lstm = LSTM(8, 16, 3, np.random.default_rng(7))
    assert lstm.n_params == 4 * 16 * (8 + 16 + 1)
    assert lstm.forward(np.zeros((2, 3, 8))).shape == (2, 16)


def test_softmax_rows_sum_to_one():
    probs = softmax(np.array([[1000.0, 0.0, -1000.0], [1.0, 2.0, 3.0]]))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)
    assert np.all(np.isfinite(probs))


@pytest.mark.parametrize("shift", [-250.0, -1.0, 3.7, 100.0])
def test_softmax_translation_invariance(shift):
    logits = np.random.default_rng(9).standard_normal((5, 16))
    np.testing.assert_allclose(softmax(logits + shift), softmax(logits), rtol=0, atol=1e-12)


def test_cross_entropy_gradient():
    rng = np.random.default_rng(8)
    logits = rng.standard_normal((3, 4))
    labels = np.array([0, 3, 1])
    grad = softmax_cross_entropy_grad(softmax(logits), labels)
    numeric = np.zeros_like(logits)
    for idx in np.ndindex(logits.shape):
        up, down = logits.copy(), logits.copy()
        up[idx] += EPS
        down[idx] -= EPS
        numeric[idx] = (cross_entropy_loss(softmax(up), labels) - cross_entropy_loss(softmax(down), labels)) / (2 * EPS)
    np.testing.assert_allclose(grad, numeric, rtol=1e-4, atol=1e-7)


def test_cross_entropy_rejects_bad_labels():
    with pytest.raises(ValueError):
        cross_entropy_loss(np.full((1, 3), 1 / 3), np.array([3]))


def test_cross_entropy_clamps_zero_probability():
    loss = cross_entropy_loss(np.array([[1.0, 0.0]]), np.array([1]))
    assert loss == pytest.approx(-np.log(1e-12))
