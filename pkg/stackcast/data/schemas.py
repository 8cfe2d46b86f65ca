"""Pydantic models for OHLCV rows."""

from __future__ import annotations

import datetime as dt
import math
from enum import Enum

from pydantic import BaseModel, ConfigDict, field_validator

CSV_HEADER = ("symbol", "date", "open", "high", "low", "close", "volume")


class PriceField(str, Enum):
    OPEN = "open"
    HIGH = "high"
    LOW = "low"
    CLOSE = "close"
    VOLUME = "volume"


NUMERIC_FIELDS: tuple[PriceField, ...] = tuple(PriceField)


class OhlcvRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    symbol: str
    date: dt.date
    open: float | None = None
    high: float | None = None
    low: float | None = None
    close: float | None = None
    volume: float | None = None

    @field_validator("open", "high", "low", "close", "volume")
    @classmethod
    def _finite(cls, v: float | None) -> float | None:
        if v is not None and not math.isfinite(v):
            raise ValueError("value must be finite")
        return v

    @field_validator("volume")
    @classmethod
    def _non_negative_volume(cls, v: float | None) -> float | None:
        if v is not None and v < 0:
            raise ValueError("volume must be non-negative")
        return v

    def value(self, field: PriceField) -> float | None:
        return getattr(self, field.value)

    @property
    def range_violation(self) -> bool:
        """True when a fully-populated row has low/high outside open/close."""
        o, h, lo, c = self.open, self.high, self.low, self.close
        if o is None or h is None or lo is None or c is None:
            return False
        return lo > min(o, c) or h < max(o, c)
