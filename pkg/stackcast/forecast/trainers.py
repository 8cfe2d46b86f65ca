"""Trainable forecasters (ANN, LSTM, RNN) and the naive last-value baseline."""

from __future__ import annotations

import time

import numpy as np
import structlog

from stackcast.data.preprocess import ScalerParams, WindowedDataset, invert_scaler
from stackcast.errors import EmptyDataset, ShapeMismatch
from stackcast.forecast.base import FitReport, ForecastModel, ModelKind, TrainConfig
from stackcast.nn.core import (
    Activation,
    AdamState,
    DenseParams,
    InitScheme,
    Mode,
    Params,
    RngStream,
    activate,
    activate_grad,
    adam_step,
    dense_backward,
    dense_forward,
    init_dense,
    mse_loss,
)
from stackcast.nn.recurrent import (
    LstmCellParams,
    RnnCellParams,
    init_lstm_layer,
    init_rnn_layer,
    lstm_backward,
    lstm_sequence_forward,
    rnn_backward,
    rnn_sequence_forward,
)

log = structlog.get_logger()

HEAD = "head"


def _dense(params: Params, name: str) -> DenseParams:
    return DenseParams(weights=params[f"{name}.W"], bias=params[f"{name}.b"])


def _dense_dict(name: str, p: DenseParams) -> Params:
    return {f"{name}.W": p.weights, f"{name}.b": p.bias}


def _recurrent_prefix(kind: ModelKind) -> str:
    return "lstm" if kind is ModelKind.LSTM else "rnn"


# ── Parameter layout ────────────────────────────────────────────────


def init_model_params(
    kind: ModelKind,
    window: int,
    features: int,
    cfg: TrainConfig,
    rng: RngStream,
    head_init: InitScheme = InitScheme.GLOROT_UNIFORM,
) -> tuple[Params, tuple[int, ...]]:
    """Fresh parameters for an architecture, plus its layer widths."""
    params: Params = {}
    if kind is ModelKind.ANN:
        widths = tuple(cfg.ann_units)
        fan_in = window * features
        for idx, units in enumerate(widths):
            params |= _dense_dict(f"dense{idx}", init_dense(fan_in, units, rng))
            fan_in = units
    elif kind is ModelKind.LSTM:
        widths = (cfg.hidden_size,) * cfg.lstm_layers
        fan_in = features
        for idx, units in enumerate(widths):
            params |= init_lstm_layer(fan_in, units, rng).to_dict(f"lstm{idx}")
            fan_in = units
    elif kind is ModelKind.RNN:
        widths = (cfg.hidden_size,)
        params |= init_rnn_layer(features, cfg.hidden_size, rng).to_dict("rnn0")
        fan_in = cfg.hidden_size
    else:
        return {}, ()
    params |= _dense_dict(HEAD, init_dense(fan_in, 1, rng, scheme=head_init))
    return params, widths


# ── Forward / backward ──────────────────────────────────────────────


def _as_windows(inputs, window: int, features: int) -> np.ndarray:
    if isinstance(inputs, WindowedDataset):
        inputs = inputs.inputs
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.ndim != 3 or X.shape[1] != window or X.shape[2] != features:
        raise ShapeMismatch(f"windows of shape {X.shape} do not match T={window}, d={features}")
    return X


def loss_and_grads(
    kind: ModelKind,
    params: Params,
    hidden_sizes: tuple[int, ...],
    X: np.ndarray,
    y: np.ndarray,
    dropout_rate: float = 0.0,
    mode: Mode = Mode.INFER,
    rng: RngStream | None = None,
) -> tuple[float, Params]:
    """MSE loss of one architecture on a batch and its exact gradients."""
    pred, backward = _forward(kind, params, hidden_sizes, X, dropout_rate, mode, rng)
    loss, d_pred = mse_loss(pred, y)
    return loss, backward(d_pred)


def _forward(kind, params, hidden_sizes, X, dropout_rate, mode, rng):
    """Predictions plus a closure mapping d(loss)/d(pred) to parameter gradients."""
    B = X.shape[0]
    if kind is ModelKind.NAIVE:
        return X[:, -1, 0].copy(), lambda d_pred: {}
    head = _dense(params, HEAD)

    if kind is ModelKind.ANN:
        a = X.reshape(B, -1)
        tape = []
        for idx in range(len(hidden_sizes)):
            p = _dense(params, f"dense{idx}")
            z = dense_forward(a, p)
            tape.append((a, p, z))
            a = activate(Activation.RELU, z)
        out = dense_forward(a, head)

        def backward(d_pred: np.ndarray) -> Params:
            grads: Params = {}
            g_head, da = dense_backward(a, head, d_pred.reshape(B, 1))
            grads |= _dense_dict(HEAD, g_head)
            for idx in reversed(range(len(tape))):
                a_in, p, z = tape[idx]
                g, da = dense_backward(a_in, p, da * activate_grad(Activation.RELU, z))
                grads |= _dense_dict(f"dense{idx}", g)
            return grads

        return out[:, 0], backward

    if kind in (ModelKind.LSTM, ModelKind.RNN):
        prefix = _recurrent_prefix(kind)
        cell = LstmCellParams if kind is ModelKind.LSTM else RnnCellParams
        seq_forward = lstm_sequence_forward if kind is ModelKind.LSTM else rnn_sequence_forward
        seq_backward = lstm_backward if kind is ModelKind.LSTM else rnn_backward
        layers = [cell.from_dict(params, f"{prefix}{i}") for i in range(len(hidden_sizes))]
        h_last, cache = seq_forward(X, layers, dropout_rate, mode, rng)
        out = dense_forward(h_last, head)

        def backward(d_pred: np.ndarray) -> Params:
            g_head, dh = dense_backward(h_last, head, d_pred.reshape(B, 1))
            grads = _dense_dict(HEAD, g_head)
            layer_grads, _ = seq_backward(cache, dh)
            for i, g in enumerate(layer_grads):
                grads |= g.to_dict(f"{prefix}{i}")
            return grads

        return out[:, 0], backward

    raise ValueError(f"unknown model kind {kind!r}")


# ── Training ────────────────────────────────────────────────────────


def _train(
    kind: ModelKind,
    data: WindowedDataset,
    cfg: TrainConfig,
    scaler: ScalerParams | None,
    head_init: InitScheme,
) -> tuple[ForecastModel, FitReport]:
    n = len(data)
    if n == 0:
        raise EmptyDataset(f"cannot train {kind.value} on an empty dataset")

    rng = RngStream(cfg.seed)
    params, widths = init_model_params(kind, data.window, data.features, cfg, rng, head_init)
    state = AdamState.zeros_like(
        params,
        learning_rate=cfg.learning_rate,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        epsilon=cfg.adam_epsilon,
    )
    rate = 0.0 if kind is ModelKind.ANN else cfg.dropout_rate

    losses: list[float] = []
    started = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            loss, grads = loss_and_grads(
                kind, params, widths, data.inputs[idx], data.targets[idx], rate, Mode.TRAIN, rng
            )
            params, state = adam_step(params, grads, state)
            total += loss * len(idx)
        losses.append(total / n)
        log.debug("epoch_complete", model=kind.value, epoch=epoch + 1, loss=losses[-1])

    wall = time.perf_counter() - started
    model = ForecastModel(
        kind=kind,
        params=params,
        scaler=scaler or ScalerParams.identity(data.features),
        window=data.window,
        hidden_sizes=widths,
        features=data.features,
        dropout_rate=rate,
        train_span=data.target_span,
    )
    report = FitReport(kind=kind, losses=losses, config=cfg, wall_time=wall, samples=n)
    log.info(
        "fit_complete",
        model=kind.value,
        samples=n,
        epochs=cfg.epochs,
        final_loss=report.final_loss,
        wall_time=round(wall, 3),
    )
    return model, report


def train_ann(
    data: WindowedDataset,
    cfg: TrainConfig | None = None,
    scaler: ScalerParams | None = None,
    head_init: InitScheme = InitScheme.GLOROT_UNIFORM,
) -> tuple[ForecastModel, FitReport]:
    """Dense relu stack over the flattened window, identity output."""
    return _train(ModelKind.ANN, data, cfg or TrainConfig(), scaler, head_init)


def train_lstm(
    data: WindowedDataset,
    cfg: TrainConfig | None = None,
    scaler: ScalerParams | None = None,
    head_init: InitScheme = InitScheme.GLOROT_UNIFORM,
) -> tuple[ForecastModel, FitReport]:
    """Stacked LSTM with dropout after each layer, dense head on the last hidden state."""
    return _train(ModelKind.LSTM, data, cfg or TrainConfig(), scaler, head_init)


def train_rnn(
    data: WindowedDataset,
    cfg: TrainConfig | None = None,
    scaler: ScalerParams | None = None,
    head_init: InitScheme = InitScheme.GLOROT_UNIFORM,
) -> tuple[ForecastModel, FitReport]:
    return _train(ModelKind.RNN, data, cfg or TrainConfig(), scaler, head_init)


def fit_naive(data: WindowedDataset, scaler: ScalerParams | None = None) -> ForecastModel:
    """Next value = last value of the window. Nothing is fitted."""
    return ForecastModel(
        kind=ModelKind.NAIVE,
        params={},
        scaler=scaler or ScalerParams.identity(data.features),
        window=data.window,
        features=data.features,
    )


TRAINERS = {
    ModelKind.ANN: train_ann,
    ModelKind.LSTM: train_lstm,
    ModelKind.RNN: train_rnn,
}


# ── Prediction ──────────────────────────────────────────────────────


def predict(model: ForecastModel, inputs) -> np.ndarray:
    """Scaled-space predictions, one per window, dropout off."""
    X = _as_windows(inputs, model.window, model.features)
    pred, _ = _forward(model.kind, model.params, model.hidden_sizes, X, 0.0, Mode.INFER, None)
    return pred


def predict_prices(model: ForecastModel, inputs) -> np.ndarray:
    return invert_scaler(model.scaler, predict(model, inputs))
