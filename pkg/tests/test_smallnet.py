import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deformspace.errors import TrainingDivergedError
from deformspace.smallnet import (
    AdamState,
    Encoding,
    MlpParams,
    adam_step,
    encode,
    mlp_backward,
    mlp_forward,
    mlp_init,
    sgd_step,
)


# -- encoding -----------------------------------------------------------------


def test_encode_zero():
    enc = Encoding(L=5, include_input=False)
    f = encode(enc, [0.0, 0.0])
    assert len(f) == 24
    sins = f.reshape(6, 4)[:, :2]
    coss = f.reshape(6, 4)[:, 2:]
    np.testing.assert_array_equal(sins, 0.0)
    np.testing.assert_array_equal(coss, 1.0)


def test_encode_first_frequency():
    enc = Encoding(L=0, include_input=False)
    f = encode(enc, [0.5, 0.0])
    # k=0 layout: sin(pi*x0), sin(pi*x1), cos(pi*x0), cos(pi*x1)
    assert f[0] == pytest.approx(1.0)   # sin(pi/2)
    assert f[2] == pytest.approx(0.0, abs=1e-15)  # cos(pi/2)


def test_encode_output_dim_with_input():
    enc = Encoding(L=5, include_input=True)
    assert enc.output_dim == 26
    assert len(encode(enc, [0.1, 0.2])) == 26


@given(st.floats(-1, 1), st.floats(-1, 1))
@settings(max_examples=25, deadline=None)
def test_encode_is_two_periodic(x, y):
    enc = Encoding(L=5, include_input=False)
    a = encode(enc, [x, y])
    b = encode(enc, [x + 2.0, y - 2.0])
    np.testing.assert_allclose(a, b, atol=1e-9)


# -- forward ------------------------------------------------------------------


def test_forward_zero_weights_returns_bias():
    params = MlpParams([np.zeros((3, 4))], [np.array([1.0, -2.0, 0.5])])
    np.testing.assert_array_equal(mlp_forward(params, np.ones(4)), [1.0, -2.0, 0.5])


def test_forward_identity_layer():
    params = MlpParams([np.eye(5)], [np.zeros(5)])
    x = np.arange(5.0)
    np.testing.assert_array_equal(mlp_forward(params, x), x)


def reference_forward(params, x):
    h = x
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = w @ h + b
        if i != len(params.weights) - 1:
            h = np.maximum(h, 0.0)
    return h


def test_forward_matches_reference_evaluator():
    params = mlp_init([7, 11, 13, 3], seed=1)
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = rng.normal(size=7)
        np.testing.assert_allclose(mlp_forward(params, x), reference_forward(params, x),
                                   atol=1e-12)


# -- backward -----------------------------------------------------------------


def fd_param_grad(params, x, cot, layer, kind, i, j=None, h=1e-5):
    def value(p):
        return mlp_forward(p, x) @ cot

    plus, minus = params.copy(), params.copy()
    if kind == "w":
        plus.weights[layer][i, j] += h
        minus.weights[layer][i, j] -= h
    else:
        plus.biases[layer][i] += h
        minus.biases[layer][i] -= h
    return (value(plus) - value(minus)) / (2 * h)


@pytest.mark.parametrize("dims", [[4, 8, 2], [26, 256, 256, 256, 256, 8]])
def test_backward_matches_finite_differences(dims):
    params = mlp_init(dims, seed=3)
    rng = np.random.default_rng(4)
    x = rng.normal(size=dims[0]) * 0.5
    cot = rng.normal(size=dims[-1])
    grads, gin = mlp_backward(params, x, cot)
    for _ in range(12):
        layer = rng.integers(len(params.weights))
        i = rng.integers(params.weights[layer].shape[0])
        j = rng.integers(params.weights[layer].shape[1])
        fd = fd_param_grad(params, x, cot, layer, "w", i, j)
        an = grads[2 * layer][i, j]
        assert an == pytest.approx(fd, rel=1e-4, abs=1e-7)
    # input gradient
    v = rng.normal(size=dims[0])
    h = 1e-5
    fd = (mlp_forward(params, x + h * v) - mlp_forward(params, x - h * v)) / (2 * h) @ cot
    assert gin @ v == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_backward_zero_cotangent():
    params = mlp_init([4, 6, 2], seed=5)
    grads, gin = mlp_backward(params, np.ones(4), np.zeros(2))
    assert all(np.all(g == 0) for g in grads)
    np.testing.assert_array_equal(gin, 0.0)


def test_backward_linear_net_input_grad_is_transpose():
    w = np.random.default_rng(6).normal(size=(3, 5))
    params = MlpParams([w], [np.zeros(3)])
    cot = np.array([1.0, -2.0, 0.5])
    _, gin = mlp_backward(params, np.ones(5), cot)
    np.testing.assert_allclose(gin, w.T @ cot, atol=1e-14)


# -- optimizers ----------------------------------------------------------------


def test_sgd_step_arithmetic():
    (p,) = sgd_step([np.array([1.0])], [np.array([2.0])], lr=0.1)
    assert p[0] == pytest.approx(0.8)


def test_sgd_zero_gradient_keeps_params():
    (p,) = sgd_step([np.array([1.0, 2.0])], [np.zeros(2)], lr=0.5)
    np.testing.assert_array_equal(p, [1.0, 2.0])


def test_adam_first_step_magnitude_is_lr():
    params = [np.array([3.0])]
    grads = [np.array([123.0])]
    state = AdamState.like(params)
    (p,) = adam_step(params, grads, state, lr=0.01)
    # First bias-corrected step is lr * g / (|g| + eps) ~ lr * sign(g).
    assert 3.0 - p[0] == pytest.approx(0.01, rel=1e-6)


def test_adam_rejects_nonfinite_gradients():
    params = [np.zeros(2)]
    state = AdamState.like(params)
    with pytest.raises(TrainingDivergedError):
        adam_step(params, [np.array([np.nan, 0.0])], state, lr=0.1)


def test_training_smoke_monotone_decrease():
    # One linear layer fitting a fixed linear target with small-lr SGD.
    rng = np.random.default_rng(7)
    target_w = rng.normal(size=(2, 3))
    xs = rng.normal(size=(20, 3))
    ys = xs @ target_w.T
    params = mlp_init([3, 2], seed=8)
    losses = []
    flat = params.flat()
    for _ in range(50):
        mlp = MlpParams([flat[0]], [flat[1]])
        pred = mlp_forward(mlp, xs)
        resid = pred - ys
        losses.append(float((resid**2).sum()))
        grads, _ = mlp_backward(mlp, xs, 2.0 * resid)
        flat = sgd_step(flat, grads, lr=1e-3)
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
