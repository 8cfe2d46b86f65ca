"""Tests for the comparison table and report files."""

from __future__ import annotations

import datetime as dt
import json

import numpy as np
import pytest

from stackcast.analysis.metrics import MetricsReport, evaluate_all
from stackcast.analysis.reports import (
    ComparisonRow,
    ComparisonTable,
    emit_report,
    read_comparison_csv,
    write_predictions,
)
from stackcast.errors import EmptyInput, ReportWriteError


def _row(model: str, r2: float, mae: float = 1.0) -> ComparisonRow:
    return ComparisonRow(model, MetricsReport(r2=r2, mae=mae, mse=2.0, rmse=2.0**0.5, n=10))


def test_build_sorts_by_r2_then_name():
    table = ComparisonTable.build([_row("ann", 0.5), _row("stack", 0.9), _row("lstm", 0.5)])
    assert [r.model for r in table.rows] == ["stack", "ann", "lstm"]
    assert table.best.model == "stack"
    assert table.row("lstm").metrics.r2 == 0.5
    with pytest.raises(KeyError):
        table.row("rnn")


def test_single_row_csv(tmp_path):
    emit_report(ComparisonTable.build([_row("naive", 0.25)]), tmp_path, formats=("csv",))
    lines = (tmp_path / "comparison.csv").read_text().splitlines()
    assert lines[0] == "model,r2,mae,mse,rmse,n"
    assert len(lines) == 2
    assert lines[1].startswith("naive,0.25,1,2,")
    assert not (tmp_path / "report.json").exists()


def test_csv_reparses_exactly(tmp_path):
    rng = np.random.default_rng(0)
    y = rng.normal(size=30)
    rows = [
        ComparisonRow(name, evaluate_all(y, y + rng.normal(scale=s, size=30)))
        for name, s in (("ann", 0.1), ("lstm", 0.3), ("naive", 1.0))
    ]
    table = ComparisonTable.build(rows)
    emit_report(table, tmp_path)
    assert read_comparison_csv(tmp_path / "comparison.csv") == table


def test_json_report(tmp_path):
    table = ComparisonTable.build([_row("ann", 0.5), _row("stack", 0.9)])
    written = emit_report(table, tmp_path / "nested", extra={"seed": 42, "paths": {"a": "b"}})
    assert [p.name for p in written] == ["comparison.csv", "report.json"]
    body = json.loads((tmp_path / "nested" / "report.json").read_text())
    assert body["seed"] == 42
    assert body["paths"] == {"a": "b"}
    assert body["space"] == "price"
    assert [r["model"] for r in body["rows"]] == ["stack", "ann"]


def test_empty_table_rejected(tmp_path):
    with pytest.raises(EmptyInput):
        emit_report(ComparisonTable(()), tmp_path)
    assert not (tmp_path / "comparison.csv").exists()


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        emit_report(ComparisonTable.build([_row("ann", 0.1)]), tmp_path, formats=("xlsx",))


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ReportWriteError):
        emit_report(ComparisonTable.build([_row("ann", 0.1)]), blocker / "out")


# ── Predictions ──────────────────────────────────────────────


def test_write_predictions(tmp_path):
    path = tmp_path / "predictions" / "ann.csv"
    dates = (dt.date(2020, 1, 2), dt.date(2020, 1, 3))
    write_predictions(path, dates, np.array([1.5, 2.0]), np.array([1.25, 0.1]))
    assert path.read_text().splitlines() == [
        "date,actual,predicted",
        "2020-01-02,1.5,1.25",
        "2020-01-03,2,0.10000000000000001",
    ]


def test_write_predictions_length_check(tmp_path):
    with pytest.raises(ValueError):
        write_predictions(tmp_path / "x.csv", (dt.date(2020, 1, 2),), np.zeros(2), np.zeros(2))
