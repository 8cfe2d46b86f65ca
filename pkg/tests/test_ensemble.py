"""Tests for the OLS meta-model and stacked predictions."""

from __future__ import annotations

import numpy as np
import pytest

from stackcast.data.preprocess import ScalerParams, WindowedDataset, fit_scaler, make_windows
from stackcast.errors import IncompatibleBases, LeakageDetected, TooFewSamples
from stackcast.forecast.base import ForecastModel, ModelKind
from stackcast.forecast.ensemble import (
    MetaFitReport,
    StackedModel,
    StackingCoefficients,
    fit_ols,
    fit_stacking,
    predict_stacked,
    predict_stacked_prices,
    stack_design,
)
from stackcast.forecast.trainers import fit_naive, predict, train_ann, train_lstm


def _last_value_ann(window: int, scaler: ScalerParams | None = None) -> ForecastModel:
    """A hand-built ANN whose output is exactly the window's last value (inputs > 0)."""
    W0 = np.zeros((window, 1))
    W0[-1, 0] = 1.0
    return ForecastModel(
        kind=ModelKind.ANN,
        params={
            "dense0.W": W0,
            "dense0.b": np.zeros(1),
            "head.W": np.ones((1, 1)),
            "head.b": np.zeros(1),
        },
        scaler=scaler or ScalerParams.identity(),
        window=window,
        hidden_sizes=(1,),
    )


def _random_lstm(window: int, seed: int, scaler: ScalerParams | None = None) -> ForecastModel:
    rng = np.random.default_rng(seed)
    H = 3
    return ForecastModel(
        kind=ModelKind.LSTM,
        params={
            "lstm0.W": rng.normal(size=(1, 4 * H)),
            "lstm0.U": rng.normal(size=(H, 4 * H)),
            "lstm0.b": rng.normal(size=4 * H),
            "head.W": rng.normal(size=(H, 1)),
            "head.b": np.zeros(1),
        },
        scaler=scaler or ScalerParams.identity(),
        window=window,
        hidden_sizes=(H,),
    )


def _stacked(b0: float, b1: float, b2: float, window: int = 4) -> StackedModel:
    report = MetaFitReport(
        residuals=np.zeros(1),
        meta_mse=0.0,
        base_mse={"lstm": 0.0, "ann": 0.0},
        samples=1,
        ridge_applied=False,
        meta_span=range(0, 1),
    )
    return StackedModel(
        base_lstm=_random_lstm(window, 0),
        base_ann=_last_value_ann(window),
        coefficients=StackingCoefficients(b0, b1, b2),
        report=report,
    )


def _positive_windows(n: int, window: int, seed: int) -> WindowedDataset:
    values = np.random.default_rng(seed).uniform(0.5, 1.5, n)
    return make_windows(values, window)


# ── fit_ols ──────────────────────────────────────────────────


def test_ols_exact_solution():
    """p1=[1,2,3], p2=[0,1,0], y = 2 + 3·p1 + 0.5·p2 → β = (2, 3, 0.5)."""
    p1 = np.array([1.0, 2.0, 3.0])
    p2 = np.array([0.0, 1.0, 0.0])
    fit = fit_ols(stack_design([p1, p2]), 2.0 + 3.0 * p1 + 0.5 * p2)
    np.testing.assert_allclose(fit.coefficients, [2.0, 3.0, 0.5], atol=1e-9)
    assert not fit.ridge_applied


def test_ols_projection_onto_one_base():
    rng = np.random.default_rng(0)
    p1, p2 = rng.normal(size=50), rng.normal(size=50)
    fit = fit_ols(stack_design([p1, p2]), p1)
    np.testing.assert_allclose(fit.coefficients, [0.0, 1.0, 0.0], atol=1e-9)


def test_ols_collinear_takes_ridge_path():
    p1 = np.linspace(0.0, 1.0, 20)
    fit = fit_ols(stack_design([p1, 2.0 * p1]), 3.0 * p1 + 1.0)
    assert fit.ridge_applied
    assert np.isfinite(fit.coefficients).all()
    X = stack_design([p1, 2.0 * p1])
    np.testing.assert_allclose(X @ fit.coefficients, 3.0 * p1 + 1.0, atol=1e-5)


def test_ols_too_few_samples():
    with pytest.raises(TooFewSamples):
        fit_ols(stack_design([np.array([1.0, 2.0]), np.array([0.0, 1.0])]), np.array([1.0, 2.0]))


def test_ols_residuals_orthogonal():
    rng = np.random.default_rng(3)
    X = stack_design([rng.normal(size=40), rng.normal(size=40), rng.normal(size=40)])
    y = rng.normal(size=40)
    fit = fit_ols(X, y)
    assert np.abs(X.T @ (y - X @ fit.coefficients)).max() <= 1e-6
    assert fit.coefficients.shape == (4,)


# ── fit_stacking ─────────────────────────────────────────────


def test_stacking_prefers_exact_base():
    """An exact ANN and a noisy LSTM give β ≈ (0, 0, 1)."""
    meta = _positive_windows(80, 4, seed=1)
    meta = WindowedDataset(meta.inputs, meta.inputs[:, -1, 0].copy(), 4, meta.origin_index)
    stacked = fit_stacking(_random_lstm(4, 2), _last_value_ann(4), meta)
    c = stacked.coefficients
    np.testing.assert_allclose([c.intercept, c.lstm, c.ann], [0.0, 0.0, 1.0], atol=1e-6)
    assert stacked.report.meta_mse < 1e-12
    assert stacked.report.base_mse["ann"] < 1e-24


@pytest.mark.parametrize("seed", range(3))
def test_stacking_meta_dominance_and_orthogonality(seed, small_train):
    """Meta-fit MSE never exceeds either base's MSE on the same samples."""
    ds = _positive_windows(140, 6, seed)
    train, meta = ds.subset(range(0, 90)), ds.subset(range(90, 134))
    lstm, _ = train_lstm(train, small_train)
    ann, _ = train_ann(train, small_train)
    stacked = fit_stacking(lstm, ann, meta)
    r = stacked.report
    assert r.meta_mse <= min(r.base_mse.values()) + 1e-9
    assert abs(float(np.mean(r.residuals))) <= 1e-9
    X = stack_design([predict(lstm, meta), predict(ann, meta)])
    assert np.abs(X.T @ r.residuals).max() <= 1e-6
    assert r.samples == len(meta)
    assert r.meta_span == meta.target_span


def test_stacking_detects_leakage(small_train):
    ds = _positive_windows(100, 4, 0)
    lstm, _ = train_lstm(ds.subset(range(0, 60)), small_train)
    ann, _ = train_ann(ds.subset(range(0, 60)), small_train)
    with pytest.raises(LeakageDetected):
        fit_stacking(lstm, ann, ds.subset(range(50, 90)))


def test_stacking_checks_bases():
    meta = _positive_windows(40, 4, 0)
    with pytest.raises(IncompatibleBases):
        fit_stacking(_last_value_ann(4), _random_lstm(4, 0), meta)
    with pytest.raises(IncompatibleBases):
        fit_stacking(_random_lstm(4, 0), _last_value_ann(5), meta)
    with pytest.raises(IncompatibleBases):
        fit_stacking(
            _random_lstm(4, 0, fit_scaler("minmax", [0.0, 2.0])), _last_value_ann(4), meta
        )
    with pytest.raises(IncompatibleBases):
        fit_stacking(_random_lstm(4, 0), fit_naive(meta), meta)


def test_stacking_coefficients_finite():
    with pytest.raises(ValueError):
        StackingCoefficients(0.0, float("nan"), 1.0)


# ── predict_stacked ──────────────────────────────────────────


def test_predict_stacked_formula():
    """β=(1, 0.5, 0.5) combines the two bases affinely."""
    windows = _positive_windows(30, 4, 5)
    model = _stacked(1.0, 0.5, 0.5)
    y_lstm = predict(model.base_lstm, windows)
    y_ann = predict(model.base_ann, windows)
    np.testing.assert_allclose(
        predict_stacked(model, windows), 1.0 + 0.5 * y_lstm + 0.5 * y_ann, rtol=0, atol=1e-15
    )


def test_predict_stacked_projection_and_intercept():
    windows = _positive_windows(30, 4, 6)
    lstm_only = _stacked(0.0, 1.0, 0.0)
    np.testing.assert_array_equal(
        predict_stacked(lstm_only, windows), predict(lstm_only.base_lstm, windows)
    )
    np.testing.assert_array_equal(predict_stacked(_stacked(7.0, 0.0, 0.0), windows), 7.0)


def test_predict_stacked_scalar_case():
    """ŷ_lstm=10 and ŷ_ann=12 under β=(1, 0.5, 0.5) give 12."""
    model = _stacked(1.0, 0.5, 0.5, window=1)
    model.base_lstm = fit_naive(make_windows([0.0, 1.0], 1))
    model.base_ann.params["head.b"] = np.array([2.0])
    window = np.array([[10.0]])
    assert predict(model.base_lstm, window)[0] == 10.0
    assert predict(model.base_ann, window)[0] == 12.0
    assert predict_stacked(model, window)[0] == 12.0


def test_predict_stacked_affine_in_deviations():
    """Doubling both bases' deviations from their means doubles the ensemble's."""
    c = StackingCoefficients(0.3, 0.6, 0.9)
    rng = np.random.default_rng(2)
    y1, y2 = rng.normal(size=20), rng.normal(size=20)
    comb = c.intercept + c.lstm * y1 + c.ann * y2
    y1d = y1.mean() + 2 * (y1 - y1.mean())
    y2d = y2.mean() + 2 * (y2 - y2.mean())
    comb_d = c.intercept + c.lstm * y1d + c.ann * y2d
    np.testing.assert_allclose(comb_d - comb_d.mean(), 2 * (comb - comb.mean()), atol=1e-12)


def test_predict_stacked_prices_inverts_once():
    scaler = ScalerParams("minmax", np.array([2.0]), np.array([4.0]))
    model = _stacked(0.0, 0.0, 1.0)
    model.base_lstm = _random_lstm(4, 0, scaler)
    model.base_ann = _last_value_ann(4, scaler)
    windows = _positive_windows(20, 4, 7)
    np.testing.assert_allclose(
        predict_stacked_prices(model, windows), windows.inputs[:, -1, 0] * 4.0 + 2.0
    )
