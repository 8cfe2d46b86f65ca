"""OHLCV CSV ingestion and cleaning: dedup, median imputation, target extraction."""

from __future__ import annotations

import csv
import datetime as dt
import io
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np
import structlog
from pydantic import ValidationError

from stackcast.data.schemas import CSV_HEADER, NUMERIC_FIELDS, OhlcvRecord, PriceField
from stackcast.errors import (
    AllMissingField,
    ConflictingDuplicateDate,
    EmptyInput,
    MalformedHeader,
    MalformedRow,
    MixedSymbols,
    UnknownField,
)

log = structlog.get_logger()

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """A cleaned single-symbol series; every column has one value per date."""

    symbol: str
    dates: tuple[dt.date, ...]
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.dates)
        for f in NUMERIC_FIELDS:
            arr = np.array(getattr(self, f.value), dtype=np.float64)
            if arr.shape != (n,):
                raise ValueError(f"{f.value} has shape {arr.shape}, expected ({n},)")
            if np.isnan(arr).any():
                raise ValueError(f"{f.value} contains missing values")
            arr.flags.writeable = False
            object.__setattr__(self, f.value, arr)
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.dates)

    def column(self, field: PriceField) -> np.ndarray:
        return getattr(self, field.value)

    def records(self) -> list[OhlcvRecord]:
        return [
            OhlcvRecord(
                symbol=self.symbol,
                date=d,
                open=float(self.open[i]),
                high=float(self.high[i]),
                low=float(self.low[i]),
                close=float(self.close[i]),
                volume=float(self.volume[i]),
            )
            for i, d in enumerate(self.dates)
        ]


@dataclass
class CleaningReport:
    rows_in: int
    rows_out: int
    duplicates_removed: int
    range_violations: int
    imputed_cells: dict[str, int] = field(default_factory=dict)

    @property
    def total_imputed(self) -> int:
        return sum(self.imputed_cells.values())


# ── Parsing ─────────────────────────────────────────────────────────


def _parse_number(raw: str, line: int, name: str) -> float | None:
    raw = raw.strip()
    if raw == "":
        return None
    try:
        return float(raw)
    except ValueError:
        raise MalformedRow(line, f"non-numeric {name} {raw!r}") from None


def _parse_date(raw: str, line: int) -> dt.date:
    raw = raw.strip()
    if not _DATE_RE.match(raw):
        raise MalformedRow(line, f"unparseable date {raw!r}")
    try:
        return dt.date.fromisoformat(raw)
    except ValueError:
        raise MalformedRow(line, f"unparseable date {raw!r}") from None


def parse_csv(stream: IO[bytes]) -> list[OhlcvRecord]:
    """Parse an OHLCV byte stream into records, in file order.

    Empty numeric fields are kept as missing (None), never zero.
    """
    data = stream.read()
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        line = data.count(b"\n", 0, exc.start) + 1
        if line == 1:
            raise MalformedHeader("header is not valid UTF-8") from None
        raise MalformedRow(line, "invalid UTF-8") from None
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise MalformedHeader(f"expected header {','.join(CSV_HEADER)!r}, got {header!r}")

    records: list[OhlcvRecord] = []
    for row in reader:
        line = reader.line_num
        if not row or all(cell.strip() == "" for cell in row):
            continue
        if len(row) != len(CSV_HEADER):
            raise MalformedRow(line, f"expected {len(CSV_HEADER)} fields, got {len(row)}")
        symbol, date_raw, *numbers = row
        values = {
            name: _parse_number(raw, line, name)
            for name, raw in zip(CSV_HEADER[2:], numbers)
        }
        try:
            records.append(
                OhlcvRecord(symbol=symbol.strip(), date=_parse_date(date_raw, line), **values)
            )
        except ValidationError as exc:
            raise MalformedRow(line, exc.errors()[0]["msg"]) from None

    log.debug("csv_parsed", rows=len(records))
    return records


def read_csv(path: str | Path) -> list[OhlcvRecord]:
    with open(path, "rb") as fh:
        return parse_csv(fh)


def write_csv(series: PriceSeries, stream: IO[str]) -> None:
    """Write a cleaned series in the input schema at full precision."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for i, d in enumerate(series.dates):
        writer.writerow(
            [series.symbol, d.isoformat()]
            + [format(float(series.column(f)[i]), ".17g") for f in NUMERIC_FIELDS]
        )


# ── Cleaning ────────────────────────────────────────────────────────


def _median(values: Sequence[float]) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))


def clean(records: Iterable[OhlcvRecord]) -> tuple[PriceSeries, CleaningReport]:
    """Deduplicate, sort by date, and median-impute missing cells.

    Exact duplicates collapse to their first occurrence; same-date rows with
    differing values are rejected. Medians are taken per field over the whole
    deduplicated series.
    """
    rows = list(records)
    if not rows:
        raise EmptyInput("no records to clean")

    symbols = {r.symbol for r in rows}
    if len(symbols) > 1:
        raise MixedSymbols(f"expected one symbol, got {sorted(symbols)}")

    by_date: dict[dt.date, OhlcvRecord] = {}
    duplicates = 0
    for rec in rows:
        seen = by_date.get(rec.date)
        if seen is None:
            by_date[rec.date] = rec
        elif seen == rec:
            duplicates += 1
        else:
            raise ConflictingDuplicateDate(f"{rec.symbol} has differing rows on {rec.date}")

    kept = [by_date[d] for d in sorted(by_date)]
    violations = sum(1 for r in kept if r.range_violation)
    if violations:
        log.warning("ohlc_range_violations", count=violations)

    columns: dict[str, np.ndarray] = {}
    imputed: dict[str, int] = {}
    for f in NUMERIC_FIELDS:
        raw = [r.value(f) for r in kept]
        present = [v for v in raw if v is not None]
        if not present:
            raise AllMissingField(f"field {f.value!r} has no values")
        missing = len(raw) - len(present)
        fill = _median(present) if missing else 0.0
        columns[f.value] = np.array(
            [fill if v is None else v for v in raw], dtype=np.float64
        )
        imputed[f.value] = missing

    series = PriceSeries(symbol=rows[0].symbol, dates=tuple(r.date for r in kept), **columns)
    report = CleaningReport(
        rows_in=len(rows),
        rows_out=len(kept),
        duplicates_removed=duplicates,
        range_violations=violations,
        imputed_cells=imputed,
    )
    log.info(
        "clean_complete",
        symbol=series.symbol,
        rows_in=report.rows_in,
        rows_out=report.rows_out,
        duplicates=duplicates,
        imputed=report.total_imputed,
    )
    return series, report


def extract_target(series: PriceSeries, field: str | PriceField = PriceField.CLOSE) -> np.ndarray:
    try:
        key = PriceField(field)
    except ValueError:
        raise UnknownField(f"unknown field {field!r}") from None
    return series.column(key).copy()


def load_series(
    path: str | Path, symbol: str | None = None
) -> tuple[PriceSeries, CleaningReport]:
    """Read a CSV, keep one symbol, and clean it."""
    records = read_csv(path)
    if symbol is not None:
        records = [r for r in records if r.symbol == symbol]
        if not records:
            raise EmptyInput(f"no rows for symbol {symbol!r} in {path}")
    return clean(records)
