import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pvnet import seeding
from pvnet.errors import DimensionError, ParameterError
from pvnet.neuralcore import layers, lstm, numgrad
from pvnet.neuralcore.optim import AdamState, adam_update

from oracles import (adam_trace, bilstm_loops, conv2d_loops, dense_loops, lstm_cell_loops, mse_loops,
                     relerr)


# ---------------------------------------------------------------- conv2d

def test_conv_zero_kernels_give_bias():
    x = np.random.default_rng(0).standard_normal((2, 5, 6))
    y = layers.conv2d_forward(x, np.zeros((3, 2, 3, 3)), np.array([1.5, -2.0, 0.25]))
    assert np.all(y[0] == 1.5) and np.all(y[1] == -2.0) and np.all(y[2] == 0.25)


def test_conv_identity_kernel():
    x = np.random.default_rng(1).standard_normal((1, 4, 4))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    np.testing.assert_array_equal(layers.conv2d_forward(x, k, np.zeros(1)), x)


def test_conv_matches_loop_oracle(rng):
    x = rng.standard_normal((2, 4, 4))
    k = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    assert relerr(layers.conv2d_forward(x, k, b), conv2d_loops(x, k, b)) <= 1e-12


def test_conv_batched_equals_single(rng):
    x = rng.standard_normal((3, 2, 6, 4))
    k = rng.standard_normal((4, 2, 3, 3))
    b = rng.standard_normal(4)
    y = layers.conv2d_forward(x, k, b)
    for n in range(3):
        np.testing.assert_allclose(y[n], layers.conv2d_forward(x[n], k, b), rtol=1e-13, atol=1e-13)


def test_conv_gradient_shapes(rng):
    x = rng.standard_normal((2, 5, 4))
    k = rng.standard_normal((3, 2, 3, 3))
    dx, dk, db = layers.conv2d_backward(rng.standard_normal((3, 5, 4)), x, k)
    assert dx.shape == x.shape and dk.shape == k.shape and db.shape == (3,)


def test_conv_channel_mismatch():
    with pytest.raises(DimensionError):
        layers.conv2d_forward(np.zeros((2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1))


# ---------------------------------------------------------------- PReLU

def test_prelu_examples():
    assert layers.prelu_forward(np.array([[2.0]]), np.array([0.25]))[0, 0] == 2.0
    assert layers.prelu_forward(np.array([[-2.0]]), np.array([0.25]))[0, 0] == -0.5


def test_prelu_slope_gradient_matches_fd():
    x = np.array([[-2.0]])
    _, ds = layers.prelu_backward(np.ones((1, 1)), x, np.array([0.25]))
    fd = numgrad.finite_diff_grad(lambda a: float(layers.prelu_forward(x, a).sum()), np.array([0.25]))
    assert ds[0] == -2.0
    assert abs(fd[0] - (-2.0)) <= 1e-6


# ---------------------------------------------------------------- maxpool

def test_maxpool_block():
    out, _ = layers.maxpool2x2_forward(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    assert out.tolist() == [[[4.0]]]


def test_maxpool_constant_field():
    out, _ = layers.maxpool2x2_forward(np.full((2, 6, 4), 7.5))
    assert out.shape == (2, 3, 2) and np.all(out == 7.5)


def test_maxpool_routes_to_argmax_and_matches_fd(rng):
    x = rng.permutation(16).reshape(1, 4, 4).astype(np.float64)
    g = rng.standard_normal((1, 2, 2))
    _, arg = layers.maxpool2x2_forward(x)
    dx = layers.maxpool2x2_backward(g, arg)
    for bi in range(2):
        for bj in range(2):
            block = x[0, 2 * bi:2 * bi + 2, 2 * bj:2 * bj + 2]
            dblock = dx[0, 2 * bi:2 * bi + 2, 2 * bj:2 * bj + 2]
            w = np.unravel_index(np.argmax(block), (2, 2))
            assert dblock[w] == g[0, bi, bj]
            assert np.count_nonzero(dblock) == 1
    fd = numgrad.finite_diff_grad(lambda t: float(np.sum(g * layers.maxpool2x2_forward(t)[0])), x.copy())
    assert numgrad.max_rel_error(dx, fd) <= 1e-8


@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_maxpool_conserves_gradient_mass(c, hp, wp, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((c, 2 * hp, 2 * wp))
    g = r.standard_normal((c, hp, wp))
    _, arg = layers.maxpool2x2_forward(x)
    assert np.isclose(layers.maxpool2x2_backward(g, arg).sum(), g.sum(), rtol=0, atol=1e-12)


def test_maxpool_odd_size_rejected():
    with pytest.raises(DimensionError):
        layers.maxpool2x2_forward(np.zeros((1, 3, 4)))


# ---------------------------------------------------------------- dropout

def test_dropout_identities(rng):
    x = rng.standard_normal((4, 5))
    np.testing.assert_array_equal(layers.dropout_forward(x, 0.0, "train", rng)[0], x)
    np.testing.assert_array_equal(layers.dropout_forward(x, 0.7, "eval")[0], x)


def test_dropout_keep_fraction():
    _, mask = layers.dropout_forward(np.ones(100_000), 0.2, "train", seeding.stream(0, "test-dropout"))
    kept = np.count_nonzero(mask) / mask.size
    assert abs(kept - 0.8) <= 0.01
    assert np.allclose(mask[mask > 0], 1.25)


def test_dropout_rate_bounds():
    with pytest.raises(ParameterError):
        layers.dropout_forward(np.ones(3), 1.0, "train", seeding.stream(0, "x"))


# ---------------------------------------------------------------- dense

def test_dense_identity_and_bias():
    x = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(layers.dense_forward(x, np.eye(3), np.zeros(3)), x)
    np.testing.assert_array_equal(layers.dense_forward(x, np.zeros((2, 3)), np.array([1.0, 2.0])), [1.0, 2.0])


def test_dense_matches_loop_oracle(rng):
    x, W, b = rng.standard_normal(3), rng.standard_normal((2, 3)), rng.standard_normal(2)
    assert relerr(layers.dense_forward(x, W, b), dense_loops(x, W, b)) <= 1e-12


# ---------------------------------------------------------------- LSTM

def _lstm_params(r, d, u):
    return {"W": r.standard_normal((4 * u, d)), "U": r.standard_normal((4 * u, u)), "b": r.standard_normal(4 * u)}


def test_lstm_zero_state_fixed_point():
    p = {"W": np.zeros((12, 2)), "U": np.zeros((12, 3)), "b": np.zeros(12)}
    h, c = lstm.lstm_cell_step(np.ones(2), np.zeros(3), np.zeros(3), p)
    assert np.all(h == 0) and np.all(c == 0)
    _, _, cache = lstm.lstm_cell_forward(np.ones(2), np.zeros(3), np.zeros(3), p)
    assert np.all(cache[4] == 0.5) and np.all(cache[5] == 0.5) and np.all(cache[6] == 0.5)


def test_lstm_zero_weights_halves_cell():
    p = {"W": np.zeros((12, 2)), "U": np.zeros((12, 3)), "b": np.zeros(12)}
    c0 = np.array([1.0, -2.0, 0.5])
    h, c = lstm.lstm_cell_step(np.ones(2), np.zeros(3), c0, p)
    np.testing.assert_array_equal(c, 0.5 * c0)
    np.testing.assert_allclose(h, 0.5 * np.tanh(0.5 * c0), rtol=1e-15)


def test_lstm_cell_matches_transcription(rng):
    p = _lstm_params(rng, 2, 3)
    x, h0, c0 = rng.standard_normal(2), rng.standard_normal(3), rng.standard_normal(3)
    h, c = lstm.lstm_cell_step(x, h0, c0, p)
    ho, co = lstm_cell_loops(x, h0, c0, p["W"], p["U"], p["b"])
    assert relerr(h, ho) <= 1e-12 and relerr(c, co) <= 1e-12


def test_bilstm_length_one_is_two_cells(rng):
    pf, pb = _lstm_params(rng, 3, 2), _lstm_params(rng, 3, 2)
    x = rng.standard_normal((1, 3))
    out = lstm.bilstm_forward(x, pf, pb)
    hf, _ = lstm.lstm_cell_step(x[0], np.zeros(2), np.zeros(2), pf)
    hb, _ = lstm.lstm_cell_step(x[0], np.zeros(2), np.zeros(2), pb)
    np.testing.assert_array_equal(out[0], np.concatenate([hf, hb]))


def test_bilstm_zero_weights_give_zero():
    p = {"W": np.zeros((8, 3)), "U": np.zeros((8, 2)), "b": np.zeros(8)}
    assert np.all(lstm.bilstm_forward(np.ones((5, 3)), p, p) == 0)


def test_bilstm_backward_half_is_reversed_unidirectional(rng):
    pf, pb = _lstm_params(rng, 3, 2), _lstm_params(rng, 3, 2)
    x = rng.standard_normal((2, 6, 3))
    out = lstm.bilstm_forward(x, pf, pb)
    rev, _ = lstm.lstm_forward(np.ascontiguousarray(x[:, ::-1]), pb)
    np.testing.assert_array_equal(out[..., 2:], rev[:, ::-1])


def test_bilstm_matches_loop_oracle(rng):
    pf, pb = _lstm_params(rng, 3, 2), _lstm_params(rng, 3, 2)
    x = rng.standard_normal((5, 3))
    assert relerr(lstm.bilstm_forward(x, pf, pb), bilstm_loops(x, pf, pb)) <= 1e-12


# ---------------------------------------------------------------- loss, optimizer, numgrad

def test_mse_examples(rng):
    assert layers.mse_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]))[0] == 0.0
    loss, grad = layers.mse_loss(np.array([2.0]), np.array([0.0]))
    assert loss == 4.0 and grad.tolist() == [4.0]
    p, t = rng.standard_normal(7), rng.standard_normal(7)
    assert relerr(layers.mse_loss(p, t)[0], mse_loops(p, t)) <= 1e-12


def test_adam_zero_gradient_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    st_ = AdamState.for_params(p)
    adam_update(p, {"w": np.zeros(2)}, st_)
    assert p["w"].tolist() == [1.0, -2.0]


def test_adam_first_step_moves_by_lr():
    p = {"w": np.array([1.0, -2.0, 0.5])}
    g = np.array([3.0, -0.01, 1e-3])
    st_ = AdamState.for_params(p, lr=0.0015)
    adam_update(p, {"w": g}, st_)
    step = np.array([1.0, -2.0, 0.5]) - p["w"]
    np.testing.assert_allclose(step, 0.0015 * np.sign(g), rtol=1e-4)


def test_adam_matches_trace(rng):
    p0 = rng.standard_normal(5)
    grads = [rng.standard_normal(5), rng.standard_normal(5)]
    p = {"w": p0.copy()}
    st_ = AdamState.for_params(p)
    for g in grads:
        adam_update(p, {"w": g}, st_)
    assert relerr(p["w"], adam_trace(p0, grads)) <= 1e-12


def test_adam_state_shape_check():
    p = {"w": np.zeros(3)}
    with pytest.raises(DimensionError):
        adam_update(p, {"w": np.zeros(4)}, AdamState.for_params(p))


def test_numgrad_known_derivatives():
    g = numgrad.finite_diff_grad(lambda x: 0.5 * float(x[0] ** 2), np.array([3.0]))
    assert abs(g[0] - 3.0) <= 1e-8
    a = 1.7
    g = numgrad.finite_diff_grad(lambda x: a * float(x[0]), np.array([0.3]))
    assert abs(g[0] - a) <= 1e-9


def test_numgrad_restores_params(rng):
    p = {"a": rng.standard_normal(4)}
    before = p["a"].copy()
    numgrad.finite_diff_grad(lambda q: float(np.sum(np.sin(q["a"]))), p)
    np.testing.assert_array_equal(p["a"], before)
