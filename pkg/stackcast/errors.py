"""Exception hierarchy for stackcast.

Every domain error carries the process exit code it maps to and, once it has
passed through a pipeline stage, the name of that stage.
"""

from __future__ import annotations

from collections.abc import Iterator
from contextlib import contextmanager

import structlog

log = structlog.get_logger()

EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class StackcastError(Exception):
    exit_code: int = EXIT_RUNTIME

    def __init__(self, message: str = "") -> None:
        super().__init__(message)
        self.stage: str | None = None

    def __str__(self) -> str:
        base = super().__str__() or type(self).__name__
        return f"[{self.stage}] {base}" if self.stage else base


# ── Input / validation errors (exit 1) ──────────────────────────────


class InputError(StackcastError):
    exit_code = EXIT_VALIDATION


class MalformedHeader(InputError):
    pass


class MalformedRow(InputError):
    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ConflictingDuplicateDate(InputError):
    pass


class AllMissingField(InputError):
    pass


class EmptyInput(InputError):
    pass


class MixedSymbols(InputError):
    pass


class UnknownField(InputError):
    pass


class ConfigError(InputError):
    pass


class InvalidSpec(InputError):
    pass


# ── Numeric / runtime errors (exit 2) ───────────────────────────────


class NumericError(StackcastError):
    pass


class DegenerateRange(NumericError):
    pass


class ZeroVariance(NumericError):
    pass


class SeriesTooShort(NumericError):
    pass


class TooFewSamples(NumericError):
    pass


class TooFewFolds(NumericError):
    pass


class ShapeMismatch(NumericError):
    pass


class InvalidRate(NumericError):
    pass


class LengthMismatch(NumericError):
    pass


class NonDeterministicLoss(NumericError):
    pass


class CacheMismatch(NumericError):
    pass


class EmptyDataset(NumericError):
    pass


class LeakageDetected(NumericError):
    pass


class IncompatibleBases(NumericError):
    pass


class ModelFormatError(StackcastError):
    pass


class ReportWriteError(StackcastError):
    pass


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Bind ``stage`` into the log context and tag escaping errors with it."""
    with structlog.contextvars.bound_contextvars(stage=name):
        try:
            yield
        except StackcastError as exc:
            if exc.stage is None:
                exc.stage = name
            log.error("stage_failed", error=type(exc).__name__, detail=str(exc))
            raise
