"""Comparison table and on-disk experiment artifacts.

Output tree under the run's output directory::

    comparison.csv              model,r2,mae,mse,rmse,n  (17 significant digits)
    report.json                 config echo, seed, rows, prediction/model paths, meta-fit summary
    predictions/<model>.csv     date,actual,predicted  (price units)
    models/<model>.stackcast    model containers
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import structlog

from stackcast.analysis.metrics import MetricsReport, MetricSpace
from stackcast.errors import EmptyInput, ReportWriteError

log = structlog.get_logger()

COMPARISON_HEADER = ("model", "r2", "mae", "mse", "rmse", "n")
PREDICTIONS_HEADER = ("date", "actual", "predicted")
COMPARISON_FILE = "comparison.csv"
REPORT_FILE = "report.json"
PREDICTIONS_DIR = "predictions"
MODELS_DIR = "models"


def fmt(value: float) -> str:
    return format(float(value), ".17g")


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    metrics: MetricsReport

    def to_dict(self) -> dict:
        m = self.metrics
        return {
            "model": self.model,
            "r2": m.r2,
            "mae": m.mae,
            "mse": m.mse,
            "rmse": m.rmse,
            "n": m.n,
        }


@dataclass(frozen=True)
class ComparisonTable:
    """One row per model, best R² first (ties broken by name)."""

    rows: tuple[ComparisonRow, ...]

    @classmethod
    def build(cls, rows: Sequence[ComparisonRow]) -> ComparisonTable:
        return cls(tuple(sorted(rows, key=lambda r: (-r.metrics.r2, r.model))))

    def __len__(self) -> int:
        return len(self.rows)

    def row(self, model: str) -> ComparisonRow:
        for r in self.rows:
            if r.model == model:
                return r
        raise KeyError(model)

    @property
    def best(self) -> ComparisonRow:
        return self.rows[0]


# ── Writers ─────────────────────────────────────────────────────────


def write_comparison_csv(table: ComparisonTable, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COMPARISON_HEADER)
        for r in table.rows:
            m = r.metrics
            writer.writerow([r.model, fmt(m.r2), fmt(m.mae), fmt(m.mse), fmt(m.rmse), m.n])


def write_predictions(
    path: Path,
    dates: Sequence[dt.date],
    actual: np.ndarray,
    predicted: np.ndarray,
) -> None:
    """Plot-ready ``date,actual,predicted`` rows in price units."""
    if not (len(dates) == len(actual) == len(predicted)):
        raise ValueError("dates, actual and predicted must have equal length")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(PREDICTIONS_HEADER)
            for d, a, p in zip(dates, actual, predicted):
                writer.writerow([d.isoformat(), fmt(a), fmt(p)])
    except OSError as exc:
        raise ReportWriteError(f"cannot write {path}: {exc}") from exc


def emit_report(
    table: ComparisonTable,
    output_dir: str | Path,
    formats: Sequence[str] = ("csv", "json"),
    extra: dict | None = None,
) -> list[Path]:
    """Write the comparison table as CSV and/or JSON.

    ``extra`` is merged into the JSON body (config echo, seed, artifact paths).
    Returns the paths written.
    """
    if not table.rows:
        raise EmptyInput("nothing to report: the comparison table is empty")
    unknown = set(formats) - {"csv", "json"}
    if unknown:
        raise ValueError(f"unknown report formats {sorted(unknown)}")

    out = Path(output_dir)
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            path = out / COMPARISON_FILE
            write_comparison_csv(table, path)
            written.append(path)
        if "json" in formats:
            body = dict(extra or {})
            body["space"] = table.rows[0].metrics.space.value
            body["rows"] = [r.to_dict() for r in table.rows]
            path = out / REPORT_FILE
            path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            written.append(path)
    except OSError as exc:
        raise ReportWriteError(f"cannot write report under {out}: {exc}") from exc

    log.info("report_written", output_dir=str(out), rows=len(table), files=len(written))
    return written


# ── Readers ─────────────────────────────────────────────────────────


def read_comparison_csv(path: str | Path) -> ComparisonTable:
    """Reparse a ``comparison.csv`` written by emit_report, preserving row order."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != COMPARISON_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        rows = [
            ComparisonRow(
                model=name,
                metrics=MetricsReport(
                    r2=float(r2),
                    mae=float(mae),
                    mse=float(mse),
                    rmse=float(rmse),
                    n=int(n),
                    space=MetricSpace.PRICE,
                ),
            )
            for name, r2, mae, mse, rmse, n in reader
        ]
    return ComparisonTable(tuple(rows))
