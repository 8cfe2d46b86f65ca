"""Entry point for stackcast."""

from __future__ import annotations

import logging
import sys

import structlog
from pydantic import ValidationError

from stackcast.cli import run_cli
from stackcast.config import Settings
from stackcast.errors import EXIT_RUNTIME, EXIT_VALIDATION, StackcastError

log = structlog.get_logger()


def configure_logging(level: str) -> None:
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            (
                structlog.dev.ConsoleRenderer()
                if sys.stderr.isatty()
                else structlog.processors.JSONRenderer()
            ),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.getLevelNamesMapping()[level.upper()]
        ),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


def main(argv: list[str] | None = None) -> int:
    """Run the CLI and map failures to exit codes (1 validation, 2 runtime)."""
    try:
        settings = Settings()
    except ValidationError as exc:
        configure_logging("error")
        print(f"stackcast: invalid environment: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    configure_logging(settings.log)

    try:
        run_cli(argv)
    except StackcastError as exc:
        log.error("command_failed", error=type(exc).__name__, stage=exc.stage, detail=str(exc))
        print(f"stackcast: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValidationError as exc:
        log.error("invalid_config", errors=exc.error_count())
        print(f"stackcast: invalid configuration:\n{exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("io_failed", detail=str(exc))
        print(f"stackcast: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
