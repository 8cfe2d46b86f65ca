"""Seeded synthetic price series for desk-scale experiments.

Generators (``εₜ ~ N(0, σ²)``, t = 0 … N−1):

- ``sine_noise``:  xₜ = A·sin(2πt/period) + offset + εₜ
- ``ar1_trend``:   xₜ = drift·t + φ·xₜ₋₁ + εₜ, with x₋₁ = 0
- ``random_walk``: xₜ = xₜ₋₁ + εₜ, with x₋₁ = offset

The signal becomes the close. Open is the previous close (the first open equals
the first close), high/low widen max/min(open, close) by ``spread``, and volume
is constant. Dates are consecutive business days from ``start``.
"""

from __future__ import annotations

import datetime as dt
from enum import Enum

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict

from stackcast.data.market_data import PriceSeries
from stackcast.data.preprocess import DEFAULT_FOLDS, DEFAULT_WINDOW
from stackcast.errors import InvalidSpec
from stackcast.nn.core import RngStream

log = structlog.get_logger()


class SyntheticKind(str, Enum):
    SINE_NOISE = "sine_noise"
    AR1_TREND = "ar1_trend"
    RANDOM_WALK = "random_walk"


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: SyntheticKind
    length: int = 1000
    sigma: float = 0.05
    seed: int = 0
    symbol: str = "SYN"
    start: dt.date = dt.date(2000, 1, 3)

    # sine_noise
    amplitude: float = 1.0
    period: float = 50.0
    offset: float = 10.0

    # ar1_trend
    phi: float = 0.9
    drift: float = 0.01

    spread: float = 0.01
    volume: float = 1_000_000.0


def validate_spec(
    spec: SyntheticSpec, window: int = DEFAULT_WINDOW, folds: int = DEFAULT_FOLDS
) -> None:
    """Raise InvalidSpec unless the spec can feed a window/fold layout."""
    minimum = window + 2 * (folds + 1)
    if spec.length <= minimum:
        raise InvalidSpec(f"length {spec.length} must exceed T + 2(k+1) = {minimum}")
    if not np.isfinite(spec.sigma) or spec.sigma < 0:
        raise InvalidSpec(f"sigma must be finite and >= 0, got {spec.sigma}")
    if spec.spread < 0 or spec.volume < 0:
        raise InvalidSpec("spread and volume must be >= 0")
    if spec.kind is SyntheticKind.SINE_NOISE and spec.period <= 0:
        raise InvalidSpec(f"period must be > 0, got {spec.period}")


def _signal(spec: SyntheticSpec, noise: np.ndarray) -> np.ndarray:
    t = np.arange(spec.length, dtype=np.float64)
    if spec.kind is SyntheticKind.SINE_NOISE:
        return spec.amplitude * np.sin(2.0 * np.pi * t / spec.period) + spec.offset + noise
    if spec.kind is SyntheticKind.RANDOM_WALK:
        return spec.offset + np.cumsum(noise)
    x = np.empty(spec.length)
    prev = 0.0
    for i in range(spec.length):
        prev = spec.drift * i + spec.phi * prev + noise[i]
        x[i] = prev
    return x


def generate_synthetic(
    spec: SyntheticSpec, window: int = DEFAULT_WINDOW, folds: int = DEFAULT_FOLDS
) -> PriceSeries:
    validate_spec(spec, window, folds)
    noise = RngStream(spec.seed).normal(spec.sigma, (spec.length,))
    close = _signal(spec, noise)
    if not np.isfinite(close).all():
        raise InvalidSpec(f"{spec.kind.value} diverged; check phi/drift")

    open_ = np.concatenate([close[:1], close[:-1]])
    high = np.maximum(open_, close) + spec.spread
    low = np.minimum(open_, close) - spec.spread
    days = np.busday_offset(np.datetime64(spec.start, "D"), np.arange(spec.length), roll="forward")

    log.debug("synthetic_generated", kind=spec.kind.value, length=spec.length, seed=spec.seed)
    return PriceSeries(
        symbol=spec.symbol,
        dates=tuple(days.tolist()),
        open=open_,
        high=high,
        low=low,
        close=close,
        volume=np.full(spec.length, spec.volume),
    )
