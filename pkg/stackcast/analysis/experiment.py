"""Experiment orchestration: clean → scale → window → split → train → stack → evaluate.

Split plan over the n = N − T windowed samples, with folds from
``time_series_split(n, k)``:

- base training: fold k−1's train range (every trained model uses it)
- meta-fit:      fold k−1's test range
- evaluation:    fold k's test range, touched by nothing before scoring

The scaler is fit on source values ``[0, e + T)`` where ``e`` is the end of the
base-training range, i.e. exactly the values the training windows read.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from stackcast.analysis.metrics import MetricSpace, evaluate_all
from stackcast.analysis.reports import (
    MODELS_DIR,
    PREDICTIONS_DIR,
    ComparisonRow,
    ComparisonTable,
    emit_report,
    write_predictions,
)
from stackcast.data.market_data import CleaningReport, PriceSeries, extract_target, load_series
from stackcast.data.preprocess import (
    DEFAULT_FOLDS,
    DEFAULT_WINDOW,
    FoldIndices,
    ScalerKind,
    ScalerParams,
    apply_scaler,
    fit_scaler,
    make_windows,
    time_series_split,
)
from stackcast.data.schemas import PriceField
from stackcast.data.synthetic import SyntheticSpec, generate_synthetic
from stackcast.errors import (
    ConfigError,
    LeakageDetected,
    ReportWriteError,
    SeriesTooShort,
    TooFewSamples,
    stage,
)
from stackcast.forecast import persistence
from stackcast.forecast.base import FitReport, ForecastModel, ModelKind, TrainConfig
from stackcast.forecast.ensemble import StackedModel, fit_stacking, predict_stacked_prices
from stackcast.forecast.trainers import TRAINERS, fit_naive, predict_prices

log = structlog.get_logger()

MODEL_SUFFIX = ".stackcast"
_MASK64 = (1 << 64) - 1


class ModelName(str, Enum):
    NAIVE = "naive"
    RNN = "rnn"
    ANN = "ann"
    LSTM = "lstm"
    STACK = "stack"


_TRAINABLE = (ModelName.RNN, ModelName.ANN, ModelName.LSTM)


# ── Configuration ───────────────────────────────────────────────────


class ExperimentConfig(BaseModel):
    """One experiment, read from a single JSON document. Unknown keys are errors."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    input: Path | None = None
    synthetic: SyntheticSpec | None = None
    symbol: str | None = None

    target: PriceField = PriceField.CLOSE
    window: int = Field(default=DEFAULT_WINDOW, ge=1)
    folds: int = Field(default=DEFAULT_FOLDS, ge=2)
    scaler: ScalerKind = ScalerKind.MINMAX
    models: list[ModelName] = Field(default_factory=lambda: list(ModelName), min_length=1)

    train: TrainConfig = Field(default_factory=TrainConfig)
    overrides: dict[ModelName, dict[str, Any]] = Field(default_factory=dict)
    seed: int = 0
    output_dir: Path = Path("out")
    max_workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check(self) -> ExperimentConfig:
        if (self.input is None) == (self.synthetic is None):
            raise ValueError("exactly one of 'input' or 'synthetic' must be given")
        if len(set(self.models)) != len(self.models):
            raise ValueError(f"duplicate entries in models: {[m.value for m in self.models]}")
        for name in self.overrides:
            if name not in _TRAINABLE:
                raise ValueError(f"overrides apply to trainable models only, not {name.value!r}")
            self.train_config(name)
        return self

    def train_config(self, name: ModelName) -> TrainConfig:
        """Base TrainConfig with the model's overrides merged on, seeded per model."""
        merged = self.train.model_dump() | self.overrides.get(name, {})
        merged["seed"] = derive_seed(self.seed, name.value)
        return TrainConfig.model_validate(merged)

    def with_seed(self, seed: int) -> ExperimentConfig:
        return self.model_copy(update={"seed": seed})

    @classmethod
    def from_json_file(cls, path: str | Path) -> ExperimentConfig:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.model_validate_json(text)


def derive_seed(seed: int, name: str) -> int:
    """``seed`` XOR the first 8 bytes of SHA-256(name), as an unsigned 64-bit int."""
    constant = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "big")
    return (seed & _MASK64) ^ constant


# ── Leakage ledger ──────────────────────────────────────────────────


@dataclass
class IndexLedger:
    """Source-index ranges each pipeline stage read."""

    entries: dict[str, list[range]] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, stage_name: str, span: range) -> None:
        with self._lock:
            self.entries.setdefault(stage_name, []).append(span)

    def touched(self, stage_name: str) -> list[range]:
        return list(self.entries.get(stage_name, []))

    def assert_untouched(self, span: range, stages: tuple[str, ...]) -> None:
        for name in stages:
            for seen in self.entries.get(name, []):
                if max(seen.start, span.start) < min(seen.stop, span.stop):
                    raise LeakageDetected(f"stage {name} read {seen}, overlapping {span}")

    def to_dict(self) -> dict[str, list[list[int]]]:
        return {k: [[r.start, r.stop] for r in v] for k, v in sorted(self.entries.items())}


# ── Results ─────────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class PredictionSet:
    dates: tuple[dt.date, ...]
    actual: np.ndarray
    predicted: np.ndarray


@dataclass(frozen=True)
class SplitPlan:
    base_train: range
    meta_fit: range
    evaluation: range

    @classmethod
    def from_folds(cls, folds: list[FoldIndices]) -> SplitPlan:
        return cls(base_train=folds[-2].train, meta_fit=folds[-2].test, evaluation=folds[-1].test)

    def to_dict(self) -> dict[str, list[int]]:
        return {k: [v.start, v.stop] for k, v in vars(self).items()}


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    table: ComparisonTable
    plan: SplitPlan
    scaler: ScalerParams
    ledger: IndexLedger
    predictions: dict[str, PredictionSet]
    models: dict[str, ForecastModel | StackedModel]
    fit_reports: dict[str, FitReport]
    cleaning: CleaningReport | None = None
    written: list[Path] = field(default_factory=list)


# ── Pipeline ────────────────────────────────────────────────────────


def _load(cfg: ExperimentConfig) -> tuple[PriceSeries, CleaningReport | None]:
    if cfg.synthetic is not None:
        return generate_synthetic(cfg.synthetic, cfg.window, cfg.folds), None
    return load_series(cfg.input, cfg.symbol)


def _plan(cfg: ExperimentConfig, length: int) -> SplitPlan:
    if length <= cfg.window:
        raise SeriesTooShort(f"series of length {length} is not longer than window {cfg.window}")
    n = length - cfg.window
    plan = SplitPlan.from_folds(time_series_split(n, cfg.folds))
    if ModelName.STACK in cfg.models and len(plan.meta_fit) < 3:
        raise TooFewSamples(f"meta-fit range {plan.meta_fit} cannot determine 3 coefficients")
    return plan


def _required_kinds(models: list[ModelName]) -> list[ModelKind]:
    kinds: set[ModelKind] = set()
    for name in models:
        if name is ModelName.STACK:
            kinds |= {ModelKind.LSTM, ModelKind.ANN}
        elif name in _TRAINABLE:
            kinds.add(ModelKind(name.value))
    return sorted(kinds, key=lambda k: k.value)


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Run the whole pipeline and, when ``write``, emit every artifact under cfg.output_dir.

    Fully determined by the input bytes and ``cfg``; training order and thread
    scheduling do not affect any output.
    """
    log.info("experiment_started", models=[m.value for m in cfg.models], seed=cfg.seed)
    ledger = IndexLedger()
    T = cfg.window

    with stage("load"):
        series, cleaning = _load(cfg)
        values = extract_target(series, cfg.target)

    with stage("split"):
        plan = _plan(cfg, len(values))
    log.info(
        "split_planned",
        samples=len(values) - T,
        base_train=[plan.base_train.start, plan.base_train.stop],
        meta_fit=[plan.meta_fit.start, plan.meta_fit.stop],
        evaluation=[plan.evaluation.start, plan.evaluation.stop],
    )

    with stage("scale"):
        fit_span = range(0, plan.base_train.stop + T)
        scaler = fit_scaler(cfg.scaler, values[fit_span.start : fit_span.stop])
        ledger.record("scaler_fit", fit_span)
        dataset = make_windows(apply_scaler(scaler, values), T)
        train_ds = dataset.subset(plan.base_train)
        meta_ds = dataset.subset(plan.meta_fit)
        eval_ds = dataset.subset(plan.evaluation)

    trained: dict[ModelKind, tuple[ForecastModel, FitReport]] = {}
    with stage("train"):
        kinds = _required_kinds(cfg.models)
        if kinds:
            ledger.record("base_train", range(plan.base_train.start, plan.base_train.stop + T))

        def fit(kind: ModelKind) -> tuple[ForecastModel, FitReport]:
            return TRAINERS[kind](train_ds, cfg.train_config(ModelName(kind.value)), scaler)

        with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
            for kind, outcome in zip(kinds, pool.map(fit, kinds)):
                trained[kind] = outcome

    models: dict[str, ForecastModel | StackedModel] = {}
    for name in cfg.models:
        if name is ModelName.NAIVE:
            models[name.value] = fit_naive(train_ds, scaler)
        elif name in _TRAINABLE:
            models[name.value] = trained[ModelKind(name.value)][0]

    if ModelName.STACK in cfg.models:
        with stage("stack"):
            ledger.record("meta_fit", range(plan.meta_fit.start, plan.meta_fit.stop + T))
            models[ModelName.STACK.value] = fit_stacking(
                trained[ModelKind.LSTM][0], trained[ModelKind.ANN][0], meta_ds
            )

    rows: list[ComparisonRow] = []
    predictions: dict[str, PredictionSet] = {}
    with stage("evaluate"):
        target_span = eval_ds.target_span
        ledger.assert_untouched(target_span, ("scaler_fit", "base_train", "meta_fit"))
        ledger.record("evaluation", target_span)
        actual = values[target_span.start : target_span.stop].copy()
        dates = series.dates[target_span.start : target_span.stop]
        for name, model in models.items():
            if isinstance(model, StackedModel):
                predicted = predict_stacked_prices(model, eval_ds)
            else:
                predicted = predict_prices(model, eval_ds)
            predictions[name] = PredictionSet(dates=dates, actual=actual, predicted=predicted)
            rows.append(ComparisonRow(name, evaluate_all(actual, predicted, MetricSpace.PRICE)))
    table = ComparisonTable.build(rows)

    result = ExperimentResult(
        config=cfg,
        table=table,
        plan=plan,
        scaler=scaler,
        ledger=ledger,
        predictions=predictions,
        models=models,
        fit_reports={k.value: v[1] for k, v in trained.items()},
        cleaning=cleaning,
    )
    log.info(
        "experiment_complete",
        best=table.best.model,
        r2={r.model: round(r.metrics.r2, 6) for r in table.rows},
    )
    if write:
        with stage("report"):
            result.written = write_artifacts(result)
    return result


def _report_body(result: ExperimentResult) -> dict[str, Any]:
    cfg = result.config
    body: dict[str, Any] = {
        "config": cfg.model_dump(mode="json"),
        "seed": cfg.seed,
        "model_seeds": {
            name.value: derive_seed(cfg.seed, name.value)
            for name in cfg.models
            if name in _TRAINABLE
        },
        "split": result.plan.to_dict(),
        "ledger": result.ledger.to_dict(),
        "scaler": result.scaler.to_dict(),
        "predictions": {name: f"{PREDICTIONS_DIR}/{name}.csv" for name in result.predictions},
        "models": {name: f"{MODELS_DIR}/{name}{MODEL_SUFFIX}" for name in result.models},
    }
    stacked = result.models.get(ModelName.STACK.value)
    if isinstance(stacked, StackedModel):
        c, r = stacked.coefficients, stacked.report
        body["stacking"] = {
            "coefficients": {"intercept": c.intercept, "lstm": c.lstm, "ann": c.ann},
            "meta_mse": r.meta_mse,
            "base_mse": r.base_mse,
            "samples": r.samples,
            "ridge_applied": r.ridge_applied,
        }
    if result.cleaning is not None:
        cl = result.cleaning
        body["cleaning"] = {
            "rows_in": cl.rows_in,
            "rows_out": cl.rows_out,
            "duplicates_removed": cl.duplicates_removed,
            "range_violations": cl.range_violations,
            "imputed_cells": cl.imputed_cells,
        }
    return body


def write_artifacts(result: ExperimentResult) -> list[Path]:
    out = Path(result.config.output_dir)
    written = emit_report(result.table, out, extra=_report_body(result))
    for name, pred in sorted(result.predictions.items()):
        path = out / PREDICTIONS_DIR / f"{name}.csv"
        write_predictions(path, pred.dates, pred.actual, pred.predicted)
        written.append(path)
    try:
        (out / MODELS_DIR).mkdir(parents=True, exist_ok=True)
        for name, model in sorted(result.models.items()):
            written.append(persistence.save(model, out / MODELS_DIR / f"{name}{MODEL_SUFFIX}"))
    except OSError as exc:
        raise ReportWriteError(f"cannot write models under {out}: {exc}") from exc
    return written
