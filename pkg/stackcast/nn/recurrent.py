"""LSTM and vanilla-RNN sequence networks with full backpropagation through time.

Gate parameters are packed column-wise in the order forget, input, output,
candidate: ``W`` is d × 4H, ``U`` is H × 4H and ``b`` has 4H entries.
Sequences start from zero hidden and cell states; only the last time step of the
last layer is returned (many-to-one).
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from stackcast.errors import CacheMismatch, ShapeMismatch
from stackcast.nn.core import InitScheme, Mode, Params, RngStream, dropout, init_params

GATES = ("forget", "input", "output", "candidate")
FORGET_BIAS = 1.0


@dataclass
class RecurrentParams:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @property
    def input_dim(self) -> int:
        return int(self.W.shape[0])

    @property
    def hidden(self) -> int:
        return int(self.U.shape[0])

    def to_dict(self, prefix: str) -> Params:
        return {f"{prefix}.W": self.W, f"{prefix}.U": self.U, f"{prefix}.b": self.b}

    @classmethod
    def from_dict(cls, params: Params, prefix: str):
        return cls(W=params[f"{prefix}.W"], U=params[f"{prefix}.U"], b=params[f"{prefix}.b"])


@dataclass
class LstmCellParams(RecurrentParams):
    def __post_init__(self) -> None:
        h = self.U.shape[0]
        if self.U.shape != (h, 4 * h) or self.W.shape[1] != 4 * h or self.b.shape != (4 * h,):
            raise ShapeMismatch(
                f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}"
            )

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(W_g, U_g, b_g) views for one gate."""
        k = GATES.index(name)
        h = self.hidden
        cols = slice(k * h, (k + 1) * h)
        return self.W[:, cols], self.U[:, cols], self.b[cols]


@dataclass
class RnnCellParams(RecurrentParams):
    def __post_init__(self) -> None:
        h = self.U.shape[0]
        if self.U.shape != (h, h) or self.W.shape[1] != h or self.b.shape != (h,):
            raise ShapeMismatch(
                f"inconsistent RNN shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}"
            )


@dataclass
class LstmState:
    h: np.ndarray  # batch × H
    c: np.ndarray  # batch × H

    @classmethod
    def zeros(cls, batch: int, hidden: int) -> LstmState:
        return cls(np.zeros((batch, hidden)), np.zeros((batch, hidden)))


def init_lstm_layer(input_dim: int, hidden: int, rng: RngStream) -> LstmCellParams:
    W = np.hstack(
        [init_params((input_dim, hidden), InitScheme.GLOROT_UNIFORM, rng) for _ in GATES]
    )
    U = np.hstack([init_params((hidden, hidden), InitScheme.ORTHOGONAL, rng) for _ in GATES])
    b = np.zeros(4 * hidden)
    b[:hidden] = FORGET_BIAS
    return LstmCellParams(W=W, U=U, b=b)


def init_rnn_layer(input_dim: int, hidden: int, rng: RngStream) -> RnnCellParams:
    return RnnCellParams(
        W=init_params((input_dim, hidden), InitScheme.GLOROT_UNIFORM, rng),
        U=init_params((hidden, hidden), InitScheme.ORTHOGONAL, rng),
        b=np.zeros(hidden),
    )


def _check_step(x: np.ndarray, h: np.ndarray, p: RecurrentParams) -> None:
    if x.ndim != 2 or x.shape[1] != p.input_dim:
        raise ShapeMismatch(f"input {x.shape} does not match input dim {p.input_dim}")
    if h.shape != (x.shape[0], p.hidden):
        raise ShapeMismatch(f"state {h.shape} does not match ({x.shape[0]}, {p.hidden})")


# ── LSTM cell ───────────────────────────────────────────────────────


@dataclass
class LstmStepCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    z: np.ndarray  # pre-activations, batch × 4H
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def lstm_cell_forward(
    x_t: np.ndarray, state: LstmState, p: LstmCellParams
) -> tuple[LstmState, LstmStepCache]:
    _check_step(x_t, state.h, p)
    if state.c.shape != state.h.shape:
        raise ShapeMismatch(f"cell {state.c.shape} vs hidden {state.h.shape}")
    H = p.hidden
    z = x_t @ p.W + state.h @ p.U + p.b
    f = expit(z[:, :H])
    i = expit(z[:, H : 2 * H])
    o = expit(z[:, 2 * H : 3 * H])
    g = np.tanh(z[:, 3 * H :])
    c = f * state.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = LstmStepCache(
        x=x_t, h_prev=state.h, c_prev=state.c, z=z, f=f, i=i, o=o, g=g, c=c, tanh_c=tanh_c
    )
    return LstmState(h=h, c=c), cache


def lstm_cell_backward(
    dh: np.ndarray, dc: np.ndarray, cache: LstmStepCache, p: LstmCellParams
) -> tuple[LstmCellParams, np.ndarray, np.ndarray, np.ndarray]:
    """Reverse one step. Returns (param grads, dx, dh_prev, dc_prev)."""
    if dh.shape != cache.c.shape or dc.shape != cache.c.shape:
        raise CacheMismatch(f"upstream {dh.shape}/{dc.shape} vs cached state {cache.c.shape}")
    do = dh * cache.tanh_c
    dc_total = dc + dh * cache.o * (1.0 - cache.tanh_c**2)
    df = dc_total * cache.c_prev
    di = dc_total * cache.g
    dg = dc_total * cache.i
    dz = np.hstack(
        [
            df * cache.f * (1.0 - cache.f),
            di * cache.i * (1.0 - cache.i),
            do * cache.o * (1.0 - cache.o),
            dg * (1.0 - cache.g**2),
        ]
    )
    grads = LstmCellParams(W=cache.x.T @ dz, U=cache.h_prev.T @ dz, b=dz.sum(axis=0))
    return grads, dz @ p.W.T, dz @ p.U.T, dc_total * cache.f


# ── RNN cell ────────────────────────────────────────────────────────


@dataclass
class RnnStepCache:
    x: np.ndarray
    h_prev: np.ndarray
    h: np.ndarray


def rnn_cell_forward(
    x_t: np.ndarray, h_prev: np.ndarray, p: RnnCellParams
) -> tuple[np.ndarray, RnnStepCache]:
    _check_step(x_t, h_prev, p)
    h = np.tanh(x_t @ p.W + h_prev @ p.U + p.b)
    return h, RnnStepCache(x=x_t, h_prev=h_prev, h=h)


def rnn_cell_backward(
    dh: np.ndarray, cache: RnnStepCache, p: RnnCellParams
) -> tuple[RnnCellParams, np.ndarray, np.ndarray]:
    if dh.shape != cache.h.shape:
        raise CacheMismatch(f"upstream {dh.shape} vs cached state {cache.h.shape}")
    dz = dh * (1.0 - cache.h**2)
    grads = RnnCellParams(W=cache.x.T @ dz, U=cache.h_prev.T @ dz, b=dz.sum(axis=0))
    return grads, dz @ p.W.T, dz @ p.U.T


# ── Layers over a sequence ──────────────────────────────────────────


def _lstm_layer_forward(X: np.ndarray, p: LstmCellParams) -> tuple[np.ndarray, list]:
    B, T, _ = X.shape
    state = LstmState.zeros(B, p.hidden)
    hs = np.empty((B, T, p.hidden))
    caches = []
    for t in range(T):
        state, cache = lstm_cell_forward(X[:, t, :], state, p)
        hs[:, t, :] = state.h
        caches.append(cache)
    return hs, caches


def _lstm_layer_backward(
    d_hs: np.ndarray, caches: list, p: LstmCellParams
) -> tuple[LstmCellParams, np.ndarray]:
    B, T, H = d_hs.shape
    grads = LstmCellParams(W=np.zeros_like(p.W), U=np.zeros_like(p.U), b=np.zeros_like(p.b))
    dX = np.empty((B, T, p.input_dim))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(T)):
        step, dX[:, t, :], dh_next, dc_next = lstm_cell_backward(
            d_hs[:, t, :] + dh_next, dc_next, caches[t], p
        )
        grads.W += step.W
        grads.U += step.U
        grads.b += step.b
    return grads, dX


def _rnn_layer_forward(X: np.ndarray, p: RnnCellParams) -> tuple[np.ndarray, list]:
    B, T, _ = X.shape
    h = np.zeros((B, p.hidden))
    hs = np.empty((B, T, p.hidden))
    caches = []
    for t in range(T):
        h, cache = rnn_cell_forward(X[:, t, :], h, p)
        hs[:, t, :] = h
        caches.append(cache)
    return hs, caches


def _rnn_layer_backward(
    d_hs: np.ndarray, caches: list, p: RnnCellParams
) -> tuple[RnnCellParams, np.ndarray]:
    B, T, H = d_hs.shape
    grads = RnnCellParams(W=np.zeros_like(p.W), U=np.zeros_like(p.U), b=np.zeros_like(p.b))
    dX = np.empty((B, T, p.input_dim))
    dh_next = np.zeros((B, H))
    for t in reversed(range(T)):
        step, dX[:, t, :], dh_next = rnn_cell_backward(d_hs[:, t, :] + dh_next, caches[t], p)
        grads.W += step.W
        grads.U += step.U
        grads.b += step.b
    return grads, dX


@dataclass
class SequenceCache:
    """Everything a stacked forward pass needs to be reversed."""

    cell: str
    layers: list[RecurrentParams]
    steps: list[list] = field(default_factory=list)
    masks: list[np.ndarray] = field(default_factory=list)


def _stack_forward(
    cell: str,
    X: np.ndarray,
    layers: Sequence[RecurrentParams],
    layer_forward: Callable,
    dropout_rate: float,
    mode: Mode | str,
    rng: RngStream | None,
) -> tuple[np.ndarray, SequenceCache]:
    if not layers:
        raise ShapeMismatch("at least one recurrent layer is required")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ShapeMismatch(f"expected batch × T × d input, got shape {X.shape}")
    cache = SequenceCache(cell=cell, layers=list(layers))
    inputs = X
    for p in layers:
        hs, steps = layer_forward(inputs, p)
        dropped, mask = dropout(hs, dropout_rate, mode, rng)
        cache.steps.append(steps)
        cache.masks.append(mask)
        inputs = dropped
    return inputs[:, -1, :], cache


def _stack_backward(
    cell: str, cache: SequenceCache, d_out: np.ndarray, layer_backward: Callable
) -> tuple[list, np.ndarray]:
    if cache.cell != cell or len(cache.steps) != len(cache.layers):
        raise CacheMismatch(f"cache from a {cache.cell} pass cannot be reversed as {cell}")
    last = cache.masks[-1]
    B, T, H = last.shape
    if d_out.shape != (B, H):
        raise CacheMismatch(f"upstream gradient {d_out.shape} does not match ({B}, {H})")
    d_seq = np.zeros((B, T, H))
    d_seq[:, -1, :] = d_out
    grads: list = [None] * len(cache.layers)
    for idx in reversed(range(len(cache.layers))):
        d_hs = d_seq * cache.masks[idx]
        grads[idx], d_seq = layer_backward(d_hs, cache.steps[idx], cache.layers[idx])
    return grads, d_seq


def lstm_sequence_forward(
    X: np.ndarray,
    layers: Sequence[LstmCellParams],
    dropout_rate: float = 0.0,
    mode: Mode | str = Mode.INFER,
    rng: RngStream | None = None,
) -> tuple[np.ndarray, SequenceCache]:
    """Run stacked LSTM layers; dropout follows every layer's hidden outputs."""
    return _stack_forward("lstm", X, layers, _lstm_layer_forward, dropout_rate, mode, rng)


def lstm_backward(
    cache: SequenceCache, d_out: np.ndarray
) -> tuple[list[LstmCellParams], np.ndarray]:
    """BPTT through every layer, step and dropout mask. Returns (grads, dX)."""
    return _stack_backward("lstm", cache, d_out, _lstm_layer_backward)


def rnn_sequence_forward(
    X: np.ndarray,
    layers: Sequence[RnnCellParams],
    dropout_rate: float = 0.0,
    mode: Mode | str = Mode.INFER,
    rng: RngStream | None = None,
) -> tuple[np.ndarray, SequenceCache]:
    return _stack_forward("rnn", X, layers, _rnn_layer_forward, dropout_rate, mode, rng)


def rnn_backward(
    cache: SequenceCache, d_out: np.ndarray
) -> tuple[list[RnnCellParams], np.ndarray]:
    return _stack_backward("rnn", cache, d_out, _rnn_layer_backward)
