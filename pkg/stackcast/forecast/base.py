"""Base types for forecasters: kinds, training configuration, fitted models."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from stackcast.data.preprocess import ScalerParams
from stackcast.nn.core import Params


class ModelKind(str, Enum):
    ANN = "ann"
    LSTM = "lstm"
    RNN = "rnn"
    NAIVE = "naive"


class TrainConfig(BaseModel):
    """Training hyperparameters. None of these values come from published results."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=50, ge=1)
    batch_size: int = Field(default=32, gt=0)
    learning_rate: float = Field(default=1e-3, gt=0)
    dropout_rate: float = Field(default=0.2, ge=0.0, lt=1.0)
    seed: int = 0
    shuffle: bool = True

    # Architecture
    hidden_size: int = Field(default=100, gt=0)
    lstm_layers: int = Field(default=2, ge=1)
    ann_units: tuple[int, ...] = Field(default=(100, 50), min_length=1)

    # Adam
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_epsilon: float = Field(default=1e-8, gt=0)


@dataclass(eq=False)
class ForecastModel:
    """A fitted base learner plus everything needed to reproduce its predictions.

    ``hidden_sizes`` gives the layer widths: dense widths for ANN, one entry per
    recurrent layer for LSTM/RNN, empty for naive. ``train_span`` is the
    source-index range of the training targets (None when nothing was fitted).
    """

    kind: ModelKind
    params: Params
    scaler: ScalerParams
    window: int
    hidden_sizes: tuple[int, ...] = ()
    features: int = 1
    dropout_rate: float = 0.0
    train_span: range | None = None

    def param_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def same_as(self, other: ForecastModel) -> bool:
        """Exact equality, bit for bit."""
        return (
            self.kind is other.kind
            and self.window == other.window
            and self.hidden_sizes == other.hidden_sizes
            and self.features == other.features
            and self.dropout_rate == other.dropout_rate
            and self.train_span == other.train_span
            and self.scaler.same_as(other.scaler)
            and self.params.keys() == other.params.keys()
            and all(np.array_equal(v, other.params[k]) for k, v in self.params.items())
        )


@dataclass
class FitReport:
    kind: ModelKind
    losses: list[float]
    config: TrainConfig
    wall_time: float = 0.0
    samples: int = 0

    @property
    def final_loss(self) -> float:
        return self.losses[-1]
