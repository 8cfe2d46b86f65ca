"""Dense-network building blocks on float64 numpy arrays.

Covers affine layers, activations, inverted dropout, MSE loss, weight
initialisation, the Adam optimiser and finite-difference gradient checking.
Randomness always comes from an explicit ``RngStream``.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit

from stackcast.errors import (
    EmptyInput,
    InvalidRate,
    LengthMismatch,
    NonDeterministicLoss,
    ShapeMismatch,
)

Params = dict[str, np.ndarray]
LossFn = Callable[[Params], tuple[float, Params]]

_SEED_MASK = (1 << 64) - 1


class Mode(str, Enum):
    TRAIN = "train"
    INFER = "infer"


class Activation(str, Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    IDENTITY = "identity"


class InitScheme(str, Enum):
    GLOROT_UNIFORM = "glorot_uniform"
    ORTHOGONAL = "orthogonal"
    ZEROS = "zeros"


class RngStream:
    """Seeded draws from numpy's PCG64 bit generator.

    PCG64 output for a given seed is fixed by numpy's stability policy, so the
    same seed yields the same stream on every platform.
    """

    ALGORITHM = "PCG64"

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & _SEED_MASK
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def random(self, shape: tuple[int, ...]) -> np.ndarray:
        return self._gen.random(shape)

    def uniform(self, low: float, high: float, shape: tuple[int, ...]) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def normal(self, scale: float, shape: tuple[int, ...]) -> np.ndarray:
        return self._gen.normal(0.0, scale, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


# ── Dense layer ─────────────────────────────────────────────────────


@dataclass
class DenseParams:
    weights: np.ndarray  # in_dim × out_dim
    bias: np.ndarray  # out_dim

    def __post_init__(self) -> None:
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ShapeMismatch(
                f"weights {self.weights.shape} and bias {self.bias.shape} disagree"
            )


def dense_forward(x: np.ndarray, p: DenseParams) -> np.ndarray:
    """y = x·W + b with the bias broadcast over the batch."""
    if x.ndim != 2 or x.shape[1] != p.weights.shape[0]:
        raise ShapeMismatch(f"input {x.shape} does not match weights {p.weights.shape}")
    return x @ p.weights + p.bias


def dense_backward(
    x: np.ndarray, p: DenseParams, grad_out: np.ndarray
) -> tuple[DenseParams, np.ndarray]:
    """Gradients of ``dense_forward`` w.r.t. its parameters and its input."""
    if grad_out.shape != (x.shape[0], p.weights.shape[1]):
        raise ShapeMismatch(f"upstream gradient {grad_out.shape} does not match output")
    grads = DenseParams(weights=x.T @ grad_out, bias=grad_out.sum(axis=0))
    return grads, grad_out @ p.weights.T


# ── Activations ─────────────────────────────────────────────────────


def activate(kind: Activation | str, x: np.ndarray) -> np.ndarray:
    kind = Activation(kind)
    if kind is Activation.RELU:
        return np.maximum(x, 0.0)
    if kind is Activation.SIGMOID:
        return expit(x)
    if kind is Activation.TANH:
        return np.tanh(x)
    return np.array(x, dtype=np.float64, copy=True)


def activate_grad(kind: Activation | str, x: np.ndarray) -> np.ndarray:
    """Elementwise derivative at ``x``; relu'(0) is 0."""
    kind = Activation(kind)
    if kind is Activation.RELU:
        return (x > 0).astype(np.float64)
    if kind is Activation.SIGMOID:
        s = expit(x)
        return s * (1.0 - s)
    if kind is Activation.TANH:
        return 1.0 - np.tanh(x) ** 2
    return np.ones_like(x, dtype=np.float64)


def dropout(
    x: np.ndarray, rate: float, mode: Mode | str, rng: RngStream | None
) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout. Returns the output and the scaled keep-mask.

    In train mode each entry survives with probability 1 - rate and is scaled by
    1 / (1 - rate); in infer mode the input passes through unchanged.
    """
    if not 0.0 <= rate < 1.0:
        raise InvalidRate(f"dropout rate must be in [0, 1), got {rate}")
    if Mode(mode) is Mode.INFER or rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("train-mode dropout needs an RngStream")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise LengthMismatch(f"pred {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise EmptyInput("mse of empty arrays")
    diff = pred - target
    n = diff.size
    return float(np.mean(diff * diff)), (2.0 / n) * diff


# ── Initialisation ──────────────────────────────────────────────────


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(
    shape: tuple[int, ...], scheme: InitScheme | str, rng: RngStream
) -> np.ndarray:
    """Draw a weight array; 1-D shapes are biases and are always zero."""
    if any(s <= 0 for s in shape):
        raise ValueError(f"dimensions must be positive, got {shape}")
    scheme = InitScheme(scheme)
    if len(shape) == 1 or scheme is InitScheme.ZEROS:
        return np.zeros(shape, dtype=np.float64)
    fan_in, fan_out = shape
    if scheme is InitScheme.ORTHOGONAL:
        a = rng.normal(1.0, (max(shape), min(shape)))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))
        return q if q.shape == shape else q.T
    limit = glorot_limit(fan_in, fan_out)
    return rng.uniform(-limit, limit, shape)


def init_dense(
    in_dim: int, out_dim: int, rng: RngStream, scheme: InitScheme = InitScheme.GLOROT_UNIFORM
) -> DenseParams:
    return DenseParams(
        weights=init_params((in_dim, out_dim), scheme, rng),
        bias=init_params((out_dim,), scheme, rng),
    )


# ── Adam ────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class AdamState:
    m: Params
    v: Params
    t: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Params, **hyper: float) -> AdamState:
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
            **hyper,
        )


def adam_step(params: Params, grads: Params, state: AdamState) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    if params.keys() != grads.keys() or params.keys() != state.m.keys():
        raise ShapeMismatch("parameter, gradient and state names differ")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape or state.m[name].shape != value.shape:
            raise ShapeMismatch(f"{name}: param {value.shape} vs grad {g.shape}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = value - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        new_m[name] = m
        new_v[name] = v
    next_state = AdamState(
        m=new_m,
        v=new_v,
        t=t,
        learning_rate=state.learning_rate,
        beta1=b1,
        beta2=b2,
        epsilon=state.epsilon,
    )
    return new_params, next_state


# ── Gradient checking ───────────────────────────────────────────────


def grad_check(
    loss_fn: LossFn, params: Params, epsilon: float = 1e-5, floor: float = 1e-8
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` returns ``(loss, grads)`` and must be deterministic. The error
    denominator is max(|analytic|, |numeric|, floor), so gradients near zero are
    judged on absolute error.
    """
    loss, analytic = loss_fn(params)
    again, _ = loss_fn(params)
    if loss != again:
        raise NonDeterministicLoss(f"loss evaluated to {loss!r} then {again!r}")

    shifted = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    worst = 0.0
    for name, value in shifted.items():
        flat = value.reshape(-1)
        grad = np.asarray(analytic[name]).reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            plus, _ = loss_fn(shifted)
            flat[idx] = orig - epsilon
            minus, _ = loss_fn(shifted)
            flat[idx] = orig
            numeric = (plus - minus) / (2.0 * epsilon)
            a = float(grad[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst
