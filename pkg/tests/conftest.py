"""Shared test fixtures."""

from __future__ import annotations

import io

import numpy as np
import pytest

from stackcast.data.preprocess import WindowedDataset, apply_scaler, fit_scaler, make_windows
from stackcast.data.schemas import CSV_HEADER
from stackcast.data.synthetic import SyntheticKind, SyntheticSpec
from stackcast.forecast.base import TrainConfig


@pytest.fixture
def make_csv():
    """Build an OHLCV byte stream from data lines (header added unless given)."""

    def _make(*lines: str, header: str = ",".join(CSV_HEADER), eol: str = "\n") -> io.BytesIO:
        return io.BytesIO(eol.join([header, *lines]).encode("utf-8") + eol.encode())

    return _make


@pytest.fixture
def sine_values() -> np.ndarray:
    t = np.arange(120, dtype=np.float64)
    return 10.0 + np.sin(2.0 * np.pi * t / 20.0)


@pytest.fixture
def sine_windows(sine_values) -> WindowedDataset:
    scaler = fit_scaler("minmax", sine_values)
    return make_windows(apply_scaler(scaler, sine_values), 8)


@pytest.fixture
def small_train() -> TrainConfig:
    return TrainConfig(
        epochs=3,
        batch_size=16,
        learning_rate=1e-2,
        dropout_rate=0.0,
        seed=3,
        hidden_size=4,
        lstm_layers=2,
        ann_units=(8, 4),
    )


@pytest.fixture
def sine_spec() -> SyntheticSpec:
    return SyntheticSpec(kind=SyntheticKind.SINE_NOISE, length=160, sigma=0.05, seed=7, period=20)


@pytest.fixture
def experiment_doc(tmp_path, sine_spec) -> dict:
    """A small but complete experiment config as a JSON-ready dict."""
    return {
        "synthetic": sine_spec.model_dump(mode="json"),
        "window": 8,
        "folds": 3,
        "models": ["naive", "rnn", "ann", "lstm", "stack"],
        "train": {
            "epochs": 3,
            "batch_size": 16,
            "learning_rate": 0.01,
            "dropout_rate": 0.1,
            "hidden_size": 4,
            "lstm_layers": 2,
            "ann_units": [8, 4],
        },
        "seed": 11,
        "output_dir": str(tmp_path / "out"),
    }
