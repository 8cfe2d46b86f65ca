"""Model files: a zip container of ``header.json`` plus one ``.npy`` member per array.

Member timestamps are pinned so identical models serialise to identical bytes.
Layout (format version 1)::

    header.json          {"format": "stackcast-model", "version": 1, "kind": ...,
                          "window", "features", "hidden_sizes", "dropout_rate",
                          "train_span", "scaler", "params": [names...]}
    params/<name>.npy    one float64 array per parameter

Stacked containers use ``"format": "stackcast-stack"`` and hold
``base_lstm.model`` / ``base_ann.model`` (nested single-model containers), the
coefficients and meta-fit summary in the header, and ``residuals.npy``.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict

from stackcast.data.preprocess import ScalerParams
from stackcast.errors import ModelFormatError
from stackcast.forecast.base import ForecastModel, ModelKind
from stackcast.forecast.ensemble import MetaFitReport, StackedModel, StackingCoefficients

log = structlog.get_logger()

FORMAT_VERSION = 1
MODEL_FORMAT = "stackcast-model"
STACK_FORMAT = "stackcast-stack"
_EPOCH = (1980, 1, 1, 0, 0, 0)


class ModelHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format: str = MODEL_FORMAT
    version: int = FORMAT_VERSION
    kind: ModelKind
    window: int
    features: int
    hidden_sizes: list[int]
    dropout_rate: float
    train_span: list[int] | None
    scaler: dict
    params: list[str]


class StackHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format: str = STACK_FORMAT
    version: int = FORMAT_VERSION
    coefficients: dict[str, float]
    meta_mse: float
    base_mse: dict[str, float]
    samples: int
    ridge_applied: bool
    meta_span: list[int]


def _span(r: range | None) -> list[int] | None:
    return None if r is None else [r.start, r.stop]


def _put(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def _npy(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(array, dtype=np.float64))
    return buf.getvalue()


def _read_npy(zf: zipfile.ZipFile, name: str) -> np.ndarray:
    with zf.open(name) as fh:
        return np.lib.format.read_array(io.BytesIO(fh.read()), allow_pickle=False)


def _read_header(zf: zipfile.ZipFile) -> dict:
    try:
        header = json.loads(zf.read("header.json"))
    except KeyError:
        raise ModelFormatError("container has no header.json") from None
    if header.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {header.get('version')!r}")
    return header


# ── Single models ───────────────────────────────────────────────────


def dump_model(model: ForecastModel) -> bytes:
    names = sorted(model.params)
    header = ModelHeader(
        kind=model.kind,
        window=model.window,
        features=model.features,
        hidden_sizes=list(model.hidden_sizes),
        dropout_rate=model.dropout_rate,
        train_span=_span(model.train_span),
        scaler=model.scaler.to_dict(),
        params=names,
    )
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        _put(zf, "header.json", header.model_dump_json(indent=2).encode())
        for name in names:
            _put(zf, f"params/{name}.npy", _npy(model.params[name]))
    return buf.getvalue()


def parse_model(payload: bytes) -> ForecastModel:
    try:
        with zipfile.ZipFile(io.BytesIO(payload)) as zf:
            raw = _read_header(zf)
            if raw.get("format") != MODEL_FORMAT:
                raise ModelFormatError(f"not a single-model container: {raw.get('format')!r}")
            header = ModelHeader.model_validate(raw)
            params = {name: _read_npy(zf, f"params/{name}.npy") for name in header.params}
    except zipfile.BadZipFile as exc:
        raise ModelFormatError(f"not a model container: {exc}") from None
    return ForecastModel(
        kind=header.kind,
        params=params,
        scaler=ScalerParams.from_dict(header.scaler),
        window=header.window,
        hidden_sizes=tuple(header.hidden_sizes),
        features=header.features,
        dropout_rate=header.dropout_rate,
        train_span=None if header.train_span is None else range(*header.train_span),
    )


# ── Stacked models ──────────────────────────────────────────────────


def dump_stacked(model: StackedModel) -> bytes:
    c = model.coefficients
    r = model.report
    header = StackHeader(
        coefficients={"intercept": c.intercept, "lstm": c.lstm, "ann": c.ann},
        meta_mse=r.meta_mse,
        base_mse=r.base_mse,
        samples=r.samples,
        ridge_applied=r.ridge_applied,
        meta_span=_span(r.meta_span),
    )
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        _put(zf, "header.json", header.model_dump_json(indent=2).encode())
        _put(zf, "base_lstm.model", dump_model(model.base_lstm))
        _put(zf, "base_ann.model", dump_model(model.base_ann))
        _put(zf, "residuals.npy", _npy(r.residuals))
    return buf.getvalue()


def parse_stacked(payload: bytes) -> StackedModel:
    try:
        with zipfile.ZipFile(io.BytesIO(payload)) as zf:
            raw = _read_header(zf)
            if raw.get("format") != STACK_FORMAT:
                raise ModelFormatError(f"not a stacked container: {raw.get('format')!r}")
            header = StackHeader.model_validate(raw)
            base_lstm = parse_model(zf.read("base_lstm.model"))
            base_ann = parse_model(zf.read("base_ann.model"))
            residuals = _read_npy(zf, "residuals.npy")
    except zipfile.BadZipFile as exc:
        raise ModelFormatError(f"not a model container: {exc}") from None
    report = MetaFitReport(
        residuals=residuals,
        meta_mse=header.meta_mse,
        base_mse=header.base_mse,
        samples=header.samples,
        ridge_applied=header.ridge_applied,
        meta_span=range(*header.meta_span),
    )
    return StackedModel(
        base_lstm=base_lstm,
        base_ann=base_ann,
        coefficients=StackingCoefficients(**header.coefficients),
        report=report,
    )


# ── Files ───────────────────────────────────────────────────────────


def save(model: ForecastModel | StackedModel, path: str | Path) -> Path:
    path = Path(path)
    payload = dump_stacked(model) if isinstance(model, StackedModel) else dump_model(model)
    path.write_bytes(payload)
    log.debug("model_saved", path=str(path), bytes=len(payload))
    return path


def load(path: str | Path) -> ForecastModel | StackedModel:
    """Load either container type, dispatching on the header's format."""
    payload = Path(path).read_bytes()
    try:
        with zipfile.ZipFile(io.BytesIO(payload)) as zf:
            fmt = _read_header(zf).get("format")
    except zipfile.BadZipFile as exc:
        raise ModelFormatError(f"{path} is not a model container: {exc}") from None
    if fmt == STACK_FORMAT:
        return parse_stacked(payload)
    if fmt == MODEL_FORMAT:
        return parse_model(payload)
    raise ModelFormatError(f"{path}: unknown container format {fmt!r}")
