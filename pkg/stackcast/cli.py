"""CLI commands for stackcast (clean, synth, run, predict).

Data goes to files; ``--output -`` sends it to stdout instead. Logs go to stderr.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import IO

import structlog

from stackcast import __version__
from stackcast.analysis.experiment import ExperimentConfig, run_experiment
from stackcast.analysis.reports import PREDICTIONS_HEADER, fmt
from stackcast.data.market_data import extract_target, load_series, write_csv
from stackcast.data.preprocess import apply_scaler, make_windows
from stackcast.data.schemas import PriceField
from stackcast.data.synthetic import SyntheticKind, SyntheticSpec, generate_synthetic
from stackcast.errors import ConfigError, ReportWriteError, stage
from stackcast.forecast import persistence
from stackcast.forecast.ensemble import StackedModel, predict_stacked_prices
from stackcast.forecast.trainers import predict_prices

log = structlog.get_logger()


@contextmanager
def _open_output(target: str) -> Iterator[IO[str]]:
    if target == "-":
        yield sys.stdout
        return
    path = Path(target)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise ReportWriteError(f"cannot write {path}: {exc}") from exc
    with fh:
        yield fh


# ── Commands ────────────────────────────────────────────────────────


def cmd_clean(args: argparse.Namespace) -> None:
    with stage("clean"):
        series, report = load_series(args.input, args.symbol)
    with _open_output(args.output) as out:
        write_csv(series, out)
    log.info(
        "clean_written",
        output=args.output,
        rows=report.rows_out,
        duplicates=report.duplicates_removed,
        imputed=report.imputed_cells,
        range_violations=report.range_violations,
    )


def cmd_synth(args: argparse.Namespace) -> None:
    overrides = {
        k: v
        for k, v in {
            "sigma": args.sigma,
            "period": args.period,
            "phi": args.phi,
            "drift": args.drift,
            "symbol": args.symbol,
        }.items()
        if v is not None
    }
    spec = SyntheticSpec(kind=args.kind, length=args.n, seed=args.seed, **overrides)
    with stage("synth"):
        series = generate_synthetic(spec, args.window, args.folds)
    with _open_output(args.output) as out:
        write_csv(series, out)
    log.info("synth_written", output=args.output, kind=spec.kind.value, length=len(series))


def cmd_run(args: argparse.Namespace) -> None:
    cfg = ExperimentConfig.from_json_file(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.output_dir is not None:
        cfg = cfg.model_copy(update={"output_dir": Path(args.output_dir)})
    result = run_experiment(cfg)
    for row in result.table.rows:
        m = row.metrics
        log.info("result", model=row.model, r2=m.r2, mae=m.mae, mse=m.mse, rmse=m.rmse, n=m.n)


def cmd_predict(args: argparse.Namespace) -> None:
    with stage("predict"):
        model = persistence.load(args.model)
        series, _ = load_series(args.input, args.symbol)
        values = extract_target(series, args.field)
        windows = make_windows(apply_scaler(model.scaler, values), model.window)
        if isinstance(model, StackedModel):
            predicted = predict_stacked_prices(model, windows)
        else:
            predicted = predict_prices(model, windows)
    span = windows.target_span
    with _open_output(args.output) as out:
        out.write(",".join(PREDICTIONS_HEADER) + "\n")
        for i, idx in enumerate(span):
            out.write(f"{series.dates[idx].isoformat()},{fmt(values[idx])},{fmt(predicted[i])}\n")
    log.info("predictions_written", output=args.output, rows=len(span))


# ── Parser ──────────────────────────────────────────────────────────


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1), not argparse's exit 2."""

    def error(self, message: str) -> None:
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stackcast", description="Stacked LSTM+ANN forecasting")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    cl = sub.add_parser("clean", help="Deduplicate and median-impute an OHLCV CSV")
    cl.add_argument("--input", required=True, help="OHLCV CSV path")
    cl.add_argument("--output", required=True, help="Cleaned CSV path, or - for stdout")
    cl.add_argument("--symbol", help="Keep only this symbol")
    cl.set_defaults(func=cmd_clean)

    sy = sub.add_parser("synth", help="Generate a synthetic OHLCV series")
    sy.add_argument("--kind", required=True, choices=[k.value for k in SyntheticKind])
    sy.add_argument("--n", type=int, required=True, help="Series length")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--output", required=True, help="CSV path, or - for stdout")
    sy.add_argument("--sigma", type=float, help="Noise standard deviation")
    sy.add_argument("--period", type=float, help="Sine period (sine_noise)")
    sy.add_argument("--phi", type=float, help="AR coefficient (ar1_trend)")
    sy.add_argument("--drift", type=float, help="Trend per step (ar1_trend)")
    sy.add_argument("--symbol", help="Ticker to write (default SYN)")
    sy.add_argument("--window", type=int, default=30, help="Window the series must support")
    sy.add_argument("--folds", type=int, default=5, help="Folds the series must support")
    sy.set_defaults(func=cmd_synth)

    rn = sub.add_parser("run", help="Run an experiment from a JSON config")
    rn.add_argument("--config", required=True, help="Experiment config (JSON)")
    rn.add_argument("--seed", type=int, help="Override the config seed")
    rn.add_argument("--output-dir", help="Override the config output directory")
    rn.set_defaults(func=cmd_run)

    pr = sub.add_parser("predict", help="Forecast with a saved model")
    pr.add_argument("--model", required=True, help="Model file (.stackcast)")
    pr.add_argument("--input", required=True, help="OHLCV CSV path")
    pr.add_argument("--output", required=True, help="Predictions CSV path, or - for stdout")
    pr.add_argument("--symbol", help="Keep only this symbol")
    pr.add_argument(
        "--field", default=PriceField.CLOSE.value, choices=[f.value for f in PriceField]
    )
    pr.set_defaults(func=cmd_predict)

    return parser


def run_cli(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    args.func(args)
