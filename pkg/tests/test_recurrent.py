"""Tests for LSTM / RNN cells and backpropagation through time."""

from __future__ import annotations

import numpy as np
import pytest

from stackcast.errors import CacheMismatch, ShapeMismatch
from stackcast.nn.core import Mode, RngStream, grad_check, mse_loss
from stackcast.nn.recurrent import (
    FORGET_BIAS,
    LstmCellParams,
    LstmState,
    RnnCellParams,
    init_lstm_layer,
    init_rnn_layer,
    lstm_backward,
    lstm_cell_backward,
    lstm_cell_forward,
    lstm_sequence_forward,
    rnn_backward,
    rnn_cell_forward,
    rnn_sequence_forward,
)

_CELLS = {
    "lstm": (LstmCellParams, init_lstm_layer, lstm_sequence_forward, lstm_backward),
    "rnn": (RnnCellParams, init_rnn_layer, rnn_sequence_forward, rnn_backward),
}


def _stack(kind: str, d: int, hidden: int, layers: int, rng: RngStream) -> dict:
    _, init, _, _ = _CELLS[kind]
    params = {}
    fan_in = d
    for i in range(layers):
        params |= init(fan_in, hidden, rng).to_dict(f"l{i}")
        fan_in = hidden
    return params


def _seq_loss(kind, X, y, layers, readout, dropout_rate=0.0, mask_seed=0):
    """MSE of (last hidden · readout) against y, through the stacked network."""
    cell, _, forward, backward = _CELLS[kind]

    def loss_fn(params):
        stack = [cell.from_dict(params, f"l{i}") for i in range(layers)]
        mode = Mode.TRAIN if dropout_rate else Mode.INFER
        h, cache = forward(X, stack, dropout_rate, mode, RngStream(mask_seed))
        loss, d_pred = mse_loss(h @ readout, y)
        grads, _ = backward(cache, np.outer(d_pred, readout))
        out = {}
        for i, g in enumerate(grads):
            out |= g.to_dict(f"l{i}")
        return loss, out

    return loss_fn


def _case(kind, seed, hidden, T, layers, d=2, batch=3, dropout_rate=0.0):
    rng = RngStream(seed)
    X = rng.normal(1.0, (batch, T, d))
    y = rng.normal(0.5, (batch,))
    readout = rng.normal(1.0, (hidden,))
    params = _stack(kind, d, hidden, layers, rng)
    # non-zero biases so every gate path carries gradient
    for name in params:
        if name.endswith(".b"):
            params[name] = params[name] + rng.normal(0.1, params[name].shape)
    return _seq_loss(kind, X, y, layers, readout, dropout_rate, seed), params


# ── Parameters ───────────────────────────────────────────────


def test_lstm_init_shapes_and_forget_bias():
    p = init_lstm_layer(3, 5, RngStream(0))
    assert p.W.shape == (3, 20)
    assert p.U.shape == (5, 20)
    np.testing.assert_array_equal(p.b[:5], np.full(5, FORGET_BIAS))
    np.testing.assert_array_equal(p.b[5:], np.zeros(15))


def test_lstm_gate_views():
    p = init_lstm_layer(2, 3, RngStream(1))
    W_o, U_o, b_o = p.gate("output")
    np.testing.assert_array_equal(W_o, p.W[:, 6:9])
    np.testing.assert_array_equal(U_o, p.U[:, 6:9])
    assert b_o.shape == (3,)


def test_recurrent_weights_orthogonal_per_gate():
    p = init_lstm_layer(2, 4, RngStream(2))
    for gate in ("forget", "input", "output", "candidate"):
        _, U_g, _ = p.gate(gate)
        np.testing.assert_allclose(U_g.T @ U_g, np.eye(4), atol=1e-12)


def test_param_shape_validation():
    with pytest.raises(ShapeMismatch):
        LstmCellParams(W=np.zeros((2, 12)), U=np.zeros((3, 3)), b=np.zeros(12))
    with pytest.raises(ShapeMismatch):
        RnnCellParams(W=np.zeros((2, 4)), U=np.zeros((3, 3)), b=np.zeros(3))


def test_dict_roundtrip_keys():
    p = init_rnn_layer(1, 2, RngStream(0))
    d = p.to_dict("rnn0")
    assert set(d) == {"rnn0.W", "rnn0.U", "rnn0.b"}
    assert RnnCellParams.from_dict(d, "rnn0").U is p.U


# ── Forward invariants ───────────────────────────────────────


def test_lstm_gates_and_hidden_bounded():
    """Gates lie in (0, 1) and |h| < 1 across 1000 random passes."""
    for seed in range(1000):
        rng = RngStream(seed)
        p = init_lstm_layer(3, 4, rng)
        p = LstmCellParams(W=p.W, U=p.U, b=p.b + rng.normal(1.0, p.b.shape))
        state = LstmState(h=rng.uniform(-1, 1, (2, 4)), c=rng.normal(2.0, (2, 4)))
        new, cache = lstm_cell_forward(rng.normal(1.0, (2, 3)), state, p)
        for gate in (cache.f, cache.i, cache.o):
            assert ((gate > 0.0) & (gate < 1.0)).all()
        assert (np.abs(new.h) < 1.0).all()
        assert (np.abs(cache.g) <= 1.0).all()


def test_cell_state_conveyor_belt():
    """Forget gate saturated open and input gate shut keep c constant."""
    H = 3
    b = np.zeros(4 * H)
    b[:H] = 50.0
    b[H : 2 * H] = -50.0
    p = LstmCellParams(W=np.zeros((2, 4 * H)), U=np.zeros((H, 4 * H)), b=b)
    c0 = np.array([[0.7, -1.3, 2.5]])
    state = LstmState(h=np.zeros((1, H)), c=c0.copy())
    rng = RngStream(0)
    for _ in range(100):
        state, _ = lstm_cell_forward(rng.normal(1.0, (1, 2)), state, p)
    np.testing.assert_allclose(state.c, c0, atol=1e-6)


def test_sequence_returns_last_step():
    rng = RngStream(4)
    p = init_rnn_layer(1, 3, rng)
    X = rng.normal(1.0, (2, 5, 1))
    h_last, _ = rnn_sequence_forward(X, [p])
    h = np.zeros((2, 3))
    for t in range(5):
        h, _ = rnn_cell_forward(X[:, t, :], h, p)
    np.testing.assert_array_equal(h_last, h)
    assert h_last.shape == (2, 3)


def test_batch_rows_independent():
    rng = RngStream(5)
    layers = [init_lstm_layer(1, 4, rng), init_lstm_layer(4, 4, rng)]
    X = rng.normal(1.0, (6, 7, 1))
    full, _ = lstm_sequence_forward(X, layers)
    one, _ = lstm_sequence_forward(X[2:3], layers)
    np.testing.assert_allclose(one[0], full[2], rtol=0, atol=1e-12)


def test_dropout_zero_train_matches_infer():
    rng = RngStream(6)
    layers = [init_lstm_layer(1, 4, rng), init_lstm_layer(4, 4, rng)]
    X = rng.normal(1.0, (3, 5, 1))
    a, _ = lstm_sequence_forward(X, layers, 0.0, Mode.TRAIN, RngStream(1))
    b, _ = lstm_sequence_forward(X, layers, 0.0, Mode.INFER)
    np.testing.assert_array_equal(a, b)


def test_forward_shape_errors():
    p = init_lstm_layer(2, 3, RngStream(0))
    with pytest.raises(ShapeMismatch):
        lstm_sequence_forward(np.zeros((4, 5, 1)), [p])
    with pytest.raises(ShapeMismatch):
        lstm_sequence_forward(np.zeros((4, 5)), [p])
    with pytest.raises(ShapeMismatch):
        lstm_sequence_forward(np.zeros((4, 5, 2)), [])


# ── Backward ─────────────────────────────────────────────────


@pytest.mark.parametrize("seed", range(5))
def test_grad_check_lstm_one_layer(seed):
    loss_fn, params = _case("lstm", seed, hidden=5, T=4, layers=1)
    assert grad_check(loss_fn, params) <= 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_grad_check_lstm_two_layers(seed):
    loss_fn, params = _case("lstm", seed, hidden=3, T=3, layers=2)
    # some layer-0 gradients here are near 1e-13, below one rounding step of the
    # loss at epsilon=1e-5
    assert grad_check(loss_fn, params, epsilon=1e-4) <= 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_grad_check_rnn(seed):
    loss_fn, params = _case("rnn", seed, hidden=5, T=4, layers=1)
    assert grad_check(loss_fn, params) <= 1e-4


def test_grad_check_lstm_with_dropout_masks():
    """Fixed dropout masks are part of the differentiated function."""
    loss_fn, params = _case("lstm", 9, hidden=3, T=3, layers=2, dropout_rate=0.3)
    assert grad_check(loss_fn, params, epsilon=1e-4) <= 1e-4


def test_input_gradient_matches_finite_differences():
    rng = RngStream(12)
    layers = [init_lstm_layer(2, 3, rng), init_lstm_layer(3, 3, rng)]
    X = rng.normal(1.0, (2, 4, 2))
    readout = rng.normal(1.0, (3,))

    def f(x):
        h, _ = lstm_sequence_forward(x, layers)
        return float(np.sum(h @ readout))

    _, cache = lstm_sequence_forward(X, layers)
    _, dX = lstm_backward(cache, np.tile(readout, (2, 1)))
    eps = 1e-6
    numeric = np.zeros_like(X)
    for idx in np.ndindex(*X.shape):
        Xp, Xm = X.copy(), X.copy()
        Xp[idx] += eps
        Xm[idx] -= eps
        numeric[idx] = (f(Xp) - f(Xm)) / (2 * eps)
    np.testing.assert_allclose(dX, numeric, atol=1e-7)


def test_backward_cache_errors():
    rng = RngStream(0)
    p = init_lstm_layer(1, 2, rng)
    _, cache = rnn_sequence_forward(rng.normal(1.0, (2, 3, 1)), [init_rnn_layer(1, 2, rng)])
    with pytest.raises(CacheMismatch):
        lstm_backward(cache, np.zeros((2, 2)))
    _, lstm_cache = lstm_sequence_forward(rng.normal(1.0, (2, 3, 1)), [p])
    with pytest.raises(CacheMismatch):
        lstm_backward(lstm_cache, np.zeros((2, 5)))
    _, step = lstm_cell_forward(np.zeros((2, 1)), LstmState.zeros(2, 2), p)
    with pytest.raises(CacheMismatch):
        lstm_cell_backward(np.zeros((3, 2)), np.zeros((3, 2)), step, p)


def test_dropout_masks_drawn_per_time_step():
    rng = RngStream(3)
    layers = [init_lstm_layer(1, 5, rng), init_lstm_layer(5, 5, rng)]
    X = rng.normal(1.0, (4, 6, 1))
    _, cache = lstm_sequence_forward(X, layers, 0.5, Mode.TRAIN, RngStream(7))
    for mask in cache.masks:
        assert mask.shape == (4, 6, 5)
        assert set(np.unique(mask)) <= {0.0, 2.0}
        assert not np.array_equal(mask[:, 0, :], mask[:, 1, :])
