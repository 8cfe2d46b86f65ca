"""Regression metrics: R², MAE, MSE, RMSE."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from stackcast.errors import EmptyInput, LengthMismatch, ZeroVariance


class MetricSpace(str, Enum):
    PRICE = "price"
    SCALED = "scaled"


@dataclass(frozen=True)
class MetricsReport:
    r2: float
    mae: float
    mse: float
    rmse: float
    n: int
    space: MetricSpace = MetricSpace.PRICE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["space"] = self.space.value
        return d


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise LengthMismatch(f"{y.size} actuals vs {y_hat.size} predictions")
    if y.size == 0:
        raise EmptyInput("metrics need at least one sample")
    return y, y_hat


def r2(y, y_hat) -> float:
    """1 − SS_res/SS_tot, with SS_tot about the evaluation split's own mean."""
    y, y_hat = _pair(y, y_hat)
    # the mean of a constant target is not always exact, so test the values
    if np.all(y == y[0]):
        raise ZeroVariance("R² is undefined for a constant target")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - y_hat) ** 2))
    return 1.0 - ss_res / ss_tot


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def mse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def rmse(y, y_hat) -> float:
    return math.sqrt(mse(y, y_hat))


def evaluate_all(y, y_hat, space: MetricSpace = MetricSpace.PRICE) -> MetricsReport:
    y, y_hat = _pair(y, y_hat)
    m = mse(y, y_hat)
    return MetricsReport(
        r2=r2(y, y_hat),
        mae=mae(y, y_hat),
        mse=m,
        rmse=math.sqrt(m),
        n=int(y.size),
        space=space,
    )
