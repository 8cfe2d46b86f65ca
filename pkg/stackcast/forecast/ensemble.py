"""Stacked generalization: an OLS meta-model over base-learner predictions.

The combined forecast is ``β0 + β1·ŷ_lstm + β2·ŷ_ann``, fitted on samples
neither base model was trained on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import structlog

from stackcast.data.preprocess import WindowedDataset, invert_scaler
from stackcast.errors import IncompatibleBases, LeakageDetected, ShapeMismatch, TooFewSamples
from stackcast.forecast.base import ForecastModel, ModelKind
from stackcast.forecast.trainers import predict

log = structlog.get_logger()

RIDGE_JITTER = 1e-8
SINGULAR_RCOND = 1e-10


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    ridge_applied: bool
    condition: float


def fit_ols(design: np.ndarray, y: np.ndarray) -> OlsFit:
    """Least squares via the normal equations XᵀXβ = Xᵀy.

    ``design`` must already contain the intercept column. When XᵀX is
    numerically singular the system is refit with a small ridge on the diagonal.
    """
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeMismatch(f"design {X.shape} and targets {y.shape} disagree")
    n, p = X.shape
    if n < p:
        raise TooFewSamples(f"{n} samples cannot determine {p} coefficients")

    gram = X.T @ X
    rhs = X.T @ y
    condition = float(np.linalg.cond(gram))
    ridge = not np.isfinite(condition) or 1.0 / condition < SINGULAR_RCOND
    if ridge:
        gram = gram + RIDGE_JITTER * np.eye(p)
        log.warning("ols_ridge_fallback", condition=condition, jitter=RIDGE_JITTER)
    beta = scipy.linalg.solve(gram, rhs, assume_a="pos")
    return OlsFit(coefficients=beta, ridge_applied=ridge, condition=condition)


@dataclass(frozen=True)
class StackingCoefficients:
    intercept: float
    lstm: float
    ann: float

    def __post_init__(self) -> None:
        if not np.isfinite([self.intercept, self.lstm, self.ann]).all():
            raise ValueError("stacking coefficients must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.intercept, self.lstm, self.ann])


@dataclass(frozen=True, eq=False)
class MetaFitReport:
    residuals: np.ndarray
    meta_mse: float
    base_mse: dict[str, float]
    samples: int
    ridge_applied: bool
    meta_span: range


@dataclass(eq=False)
class StackedModel:
    base_lstm: ForecastModel
    base_ann: ForecastModel
    coefficients: StackingCoefficients
    report: MetaFitReport

    @property
    def window(self) -> int:
        return self.base_lstm.window

    @property
    def scaler(self):
        return self.base_lstm.scaler


def _check_bases(base_lstm: ForecastModel, base_ann: ForecastModel) -> None:
    if base_lstm.kind is not ModelKind.LSTM or base_ann.kind is not ModelKind.ANN:
        raise IncompatibleBases(
            f"expected (lstm, ann) bases, got ({base_lstm.kind.value}, {base_ann.kind.value})"
        )
    if base_lstm.window != base_ann.window:
        raise IncompatibleBases(f"window {base_lstm.window} vs {base_ann.window}")
    if not base_lstm.scaler.same_as(base_ann.scaler):
        raise IncompatibleBases("bases were fitted with different scalers")


def _overlaps(a: range, b: range) -> bool:
    return max(a.start, b.start) < min(a.stop, b.stop)


def stack_design(predictions: list[np.ndarray]) -> np.ndarray:
    """Intercept column followed by one column per base prediction."""
    n = predictions[0].shape[0]
    return np.column_stack([np.ones(n), *predictions])


def fit_stacking(
    base_lstm: ForecastModel, base_ann: ForecastModel, meta_data: WindowedDataset
) -> StackedModel:
    """Fit the meta-model on held-out base predictions."""
    _check_bases(base_lstm, base_ann)
    meta_span = meta_data.target_span
    for base in (base_lstm, base_ann):
        if base.train_span is not None and _overlaps(base.train_span, meta_span):
            raise LeakageDetected(
                f"{base.kind.value} trained on {base.train_span}, meta samples {meta_span}"
            )

    y = meta_data.targets
    y_lstm = predict(base_lstm, meta_data)
    y_ann = predict(base_ann, meta_data)
    fit = fit_ols(stack_design([y_lstm, y_ann]), y)
    b0, b1, b2 = (float(v) for v in fit.coefficients)
    coefficients = StackingCoefficients(intercept=b0, lstm=b1, ann=b2)

    residuals = y - (b0 + b1 * y_lstm + b2 * y_ann)
    report = MetaFitReport(
        residuals=residuals,
        meta_mse=float(np.mean(residuals**2)),
        base_mse={
            "lstm": float(np.mean((y - y_lstm) ** 2)),
            "ann": float(np.mean((y - y_ann) ** 2)),
        },
        samples=len(y),
        ridge_applied=fit.ridge_applied,
        meta_span=meta_span,
    )
    log.info(
        "stacking_fitted",
        beta=[b0, b1, b2],
        meta_mse=report.meta_mse,
        base_mse=report.base_mse,
        samples=report.samples,
        ridge=fit.ridge_applied,
    )
    return StackedModel(base_lstm, base_ann, coefficients, report)


def predict_stacked(model: StackedModel, inputs) -> np.ndarray:
    """ŷ_meta = β0 + β1·ŷ_lstm + β2·ŷ_ann, in scaled space."""
    c = model.coefficients
    return c.intercept + c.lstm * predict(model.base_lstm, inputs) + c.ann * predict(
        model.base_ann, inputs
    )


def predict_stacked_prices(model: StackedModel, inputs) -> np.ndarray:
    return invert_scaler(model.scaler, predict_stacked(model, inputs))
