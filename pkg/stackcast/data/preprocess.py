"""Scaling, sliding-window datasets, and expanding-window time-series splits."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from stackcast.errors import (
    DegenerateRange,
    EmptyInput,
    SeriesTooShort,
    TooFewFolds,
    TooFewSamples,
    ZeroVariance,
)

DEFAULT_WINDOW = 30
DEFAULT_FOLDS = 5


class ScalerKind(str, Enum):
    MINMAX = "minmax"
    STANDARD = "standard"


@dataclass(frozen=True, eq=False)
class ScalerParams:
    """Per-feature affine scaling ``(x - loc) / scale``.

    minmax: loc = min, scale = max - min. standard: loc = mean, scale = population std.
    """

    kind: ScalerKind
    loc: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ScalerKind(self.kind))
        loc = np.atleast_1d(np.array(self.loc, dtype=np.float64))
        scale = np.atleast_1d(np.array(self.scale, dtype=np.float64))
        if loc.shape != scale.shape or loc.ndim != 1:
            raise ValueError("loc and scale must be 1-D with equal length")
        if self.kind is ScalerKind.MINMAX and not (scale > 0).all():
            raise DegenerateRange("minmax scaler requires max > min for every feature")
        if self.kind is ScalerKind.STANDARD and not (scale > 0).all():
            raise ZeroVariance("standard scaler requires std > 0 for every feature")
        loc.flags.writeable = False
        scale.flags.writeable = False
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def identity(cls, features: int = 1) -> ScalerParams:
        """A minmax scaler over [0, 1]; transforms are exact no-ops."""
        return cls(ScalerKind.MINMAX, np.zeros(features), np.ones(features))

    @property
    def features(self) -> int:
        return int(self.loc.shape[0])

    @property
    def data_min(self) -> np.ndarray:
        return self.loc

    @property
    def data_max(self) -> np.ndarray:
        return self.loc + self.scale

    @property
    def mean(self) -> np.ndarray:
        return self.loc

    @property
    def std(self) -> np.ndarray:
        return self.scale

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "loc": self.loc.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> ScalerParams:
        return cls(ScalerKind(data["kind"]), np.array(data["loc"]), np.array(data["scale"]))

    def same_as(self, other: ScalerParams) -> bool:
        return (
            self.kind is other.kind
            and np.array_equal(self.loc, other.loc)
            and np.array_equal(self.scale, other.scale)
        )


def _as_2d(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr.reshape(-1, 1) if arr.ndim <= 1 else arr


def fit_scaler(kind: ScalerKind | str, data) -> ScalerParams:
    """Fit scaling statistics. Callers pass training values only."""
    kind = ScalerKind(kind)
    arr = _as_2d(data)
    if arr.size == 0:
        raise EmptyInput("cannot fit a scaler on empty data")
    if kind is ScalerKind.MINMAX:
        lo, hi = arr.min(axis=0), arr.max(axis=0)
        if not (hi > lo).all():
            raise DegenerateRange("constant feature: max equals min")
        return ScalerParams(kind, lo, hi - lo)
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)
    if not (std > 0).all():
        raise ZeroVariance("feature has zero variance")
    return ScalerParams(kind, mean, std)


def _broadcast(params: ScalerParams) -> tuple[np.ndarray, np.ndarray]:
    if params.features == 1:
        return params.loc[0], params.scale[0]
    return params.loc, params.scale


def apply_scaler(params: ScalerParams, data) -> np.ndarray:
    """Scale values; no clipping, so unseen extremes may leave [0, 1]."""
    arr = np.asarray(data, dtype=np.float64)
    loc, scale = _broadcast(params)
    return (arr - loc) / scale


def invert_scaler(params: ScalerParams, data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    loc, scale = _broadcast(params)
    return arr * scale + loc


# ── Windowing ───────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class WindowedDataset:
    """Supervised pairs: ``inputs[i]`` (T × d) predicts ``targets[i]``.

    ``origin_index`` is the source-series index of ``targets[0]``; target i sits
    at source index ``origin_index + i``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    window: int
    origin_index: int

    def __len__(self) -> int:
        return int(self.targets.shape[0])

    @property
    def features(self) -> int:
        return int(self.inputs.shape[2])

    @property
    def target_span(self) -> range:
        return range(self.origin_index, self.origin_index + len(self))

    def subset(self, samples: range) -> WindowedDataset:
        """Restrict to a contiguous range of sample indices."""
        if samples.step != 1 or samples.start < 0 or samples.stop > len(self):
            raise ValueError(f"sample range {samples} outside dataset of {len(self)}")
        return WindowedDataset(
            inputs=self.inputs[samples.start : samples.stop],
            targets=self.targets[samples.start : samples.stop],
            window=self.window,
            origin_index=self.origin_index + samples.start,
        )


def make_windows(series, window: int = DEFAULT_WINDOW) -> WindowedDataset:
    """Turn a series into N - T (window, next value) pairs."""
    values = np.asarray(series, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be >= 1")
    n = values.shape[0]
    if n <= window:
        raise SeriesTooShort(f"series of length {n} cannot fill a window of {window} plus a target")
    features = values.reshape(n, -1)
    # sliding_window_view over axis 0 yields (n - T + 1, d, T); drop the last window (no target)
    views = sliding_window_view(features, window, axis=0)[: n - window]
    inputs = np.ascontiguousarray(np.moveaxis(views, -1, 1))
    targets = features[window:, 0].copy()
    return WindowedDataset(inputs=inputs, targets=targets, window=window, origin_index=window)


# ── Splitting ───────────────────────────────────────────────────────


@dataclass(frozen=True)
class FoldIndices:
    train: range
    test: range


def time_series_split(n: int, k: int = DEFAULT_FOLDS) -> list[FoldIndices]:
    """Expanding-window folds; the last fold is the held-out evaluation fold.

    Test blocks have size floor(n / (k + 1)); any remainder lands in the first
    training block.
    """
    if k < 2:
        raise TooFewFolds(f"need at least 2 folds, got {k}")
    if n < 2 * (k + 1):
        raise TooFewSamples(f"{n} samples cannot form {k} folds (need >= {2 * (k + 1)})")
    size = n // (k + 1)
    folds = []
    for j in range(1, k + 1):
        start = n - (k - j + 1) * size
        folds.append(FoldIndices(train=range(0, start), test=range(start, start + size)))
    return folds
