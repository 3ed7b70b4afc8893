"""Lossless JSON file formats for datasets, models, operators, and predictions.

All numeric payloads are serialized as JSON numbers via Python's
shortest-roundtrip float representation, so write/load pairs are bit-exact.
Files are written atomically (temp file in the same directory, then rename);
a partially written target is never observable.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Any, Sequence

import numpy as np

from .dataset import Dataset, DatasetTruth
from .errors import DataFormatError, FofregError, FormatVersionError
from .funcspace import FunctionSample, Grid, make_grid
from .kernels import FiniteRankOperator, KernelSpec
from .model import FitReport, MfRkhsModel
from .solver import FitConfig

__all__ = [
    "FORMAT_VERSION",
    "save_dataset",
    "load_dataset",
    "save_model",
    "load_model",
    "model_roundtrip",
    "save_operator",
    "load_operator",
    "save_predictions",
    "load_predictions",
    "atomic_write_text",
]

FORMAT_VERSION = 1


def atomic_write_text(path: str, text: str) -> None:
    """Write text to ``path`` via a temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".fofreg-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(document: dict) -> str:
    return json.dumps(document, allow_nan=False, indent=1)


def _load_json(path: str, expected_kind: str) -> dict:
    try:
        with open(path, "r") as handle:
            doc = json.load(handle)
    except FileNotFoundError:
        raise DataFormatError(f"{path}: file not found")
    except json.JSONDecodeError as exc:
        raise DataFormatError(
            f"{path}: parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"
        )
    if not isinstance(doc, dict):
        raise DataFormatError(f"{path}: expected a JSON object at the top level")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(
            f"{path}: format_version {version!r} not supported (expected {FORMAT_VERSION})"
        )
    kind = doc.get("kind")
    if kind != expected_kind:
        raise DataFormatError(
            f"{path}: kind {kind!r} is not a {expected_kind!r} file"
        )
    return doc


def _require(doc: dict, key: str, where: str) -> Any:
    if key not in doc:
        raise DataFormatError(f"{where}: missing field {key!r}")
    return doc[key]


def _float_list(raw: Any, where: str) -> np.ndarray:
    if not isinstance(raw, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw
    ):
        raise DataFormatError(f"{where}: expected a list of numbers")
    arr = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DataFormatError(f"{where}: values must be finite")
    return arr


def _grid_from(raw: Any, where: str) -> Grid:
    if not isinstance(raw, list) or len(raw) == 0:
        raise DataFormatError(f"{where}: expected a non-empty list of axes")
    axes = [_float_list(axis, f"{where}[{k}]") for k, axis in enumerate(raw)]
    try:
        return make_grid(axes)
    except FofregError as exc:
        raise DataFormatError(f"{where}: {exc}")


def _samples_from(raw: Any, grid: Grid, where: str) -> list[FunctionSample]:
    if not isinstance(raw, list) or len(raw) == 0:
        raise DataFormatError(f"{where}: expected a non-empty list of sample vectors")
    out = []
    for i, values in enumerate(raw):
        vec = _float_list(values, f"{where}[{i}]")
        if vec.size != grid.node_count:
            raise DataFormatError(
                f"{where}[{i}]: expected {grid.node_count} values, got {vec.size}"
            )
        out.append(FunctionSample(grid, vec))
    return out


def _grid_doc(grid: Grid) -> list[list[float]]:
    return [axis.tolist() for axis in grid.axes]


def _variable_doc(name: str, samples: Sequence[FunctionSample]) -> dict:
    return {
        "name": name,
        "axes": _grid_doc(samples[0].grid),
        "samples": [s.values.tolist() for s in samples],
    }


# ---------------------------------------------------------------------------
# datasets


def save_dataset(path: str, data: Dataset) -> None:
    doc: dict = {
        "format_version": FORMAT_VERSION,
        "kind": "dataset",
        "response": {
            "axes": _grid_doc(data.response_grid),
            "samples": [y.values.tolist() for y in data.responses],
        },
        "covariates": [
            _variable_doc(name, cov)
            for name, cov in zip(data.names, data.covariates)
        ],
    }
    if data.truth is not None:
        doc["truth"] = {
            "theta": data.truth.theta.tolist(),
            "u": [u.values.tolist() for u in data.truth.u],
        }
    atomic_write_text(path, _dump(doc))


def load_dataset(path: str) -> Dataset:
    """Load and fully validate a dataset file.

    Raises :class:`DataFormatError` naming the first offending field and
    record index on any structural problem.
    """
    doc = _load_json(path, "dataset")
    response_doc = _require(doc, "response", path)
    response_grid = _grid_from(_require(response_doc, "axes", "response"), "response.axes")
    responses = _samples_from(
        _require(response_doc, "samples", "response"), response_grid, "response.samples"
    )

    cov_doc = _require(doc, "covariates", path)
    if not isinstance(cov_doc, list) or len(cov_doc) == 0:
        raise DataFormatError(f"{path}: covariates must be a non-empty list")
    covariates = []
    names = []
    for l, entry in enumerate(cov_doc):
        where = f"covariates[{l}]"
        if not isinstance(entry, dict):
            raise DataFormatError(f"{where}: expected an object")
        name = entry.get("name", f"x{l + 1}")
        grid = _grid_from(_require(entry, "axes", where), f"{where}.axes")
        samples = _samples_from(
            _require(entry, "samples", where), grid, f"{where}.samples"
        )
        if len(samples) != len(responses):
            raise DataFormatError(
                f"{where}: {len(samples)} samples but the response has {len(responses)}"
            )
        covariates.append(tuple(samples))
        names.append(str(name))

    truth = None
    if doc.get("truth") is not None:
        truth_doc = doc["truth"]
        theta = _float_list(_require(truth_doc, "theta", "truth"), "truth.theta")
        if theta.size != len(covariates):
            raise DataFormatError(
                f"truth.theta: expected {len(covariates)} entries, got {theta.size}"
            )
        u = _samples_from(_require(truth_doc, "u", "truth"), response_grid, "truth.u")
        truth = DatasetTruth(theta=theta, u=tuple(u))

    try:
        return Dataset(
            responses=tuple(responses),
            covariates=tuple(covariates),
            names=tuple(names),
            truth=truth,
        )
    except FofregError as exc:
        raise DataFormatError(f"{path}: {exc}")


# ---------------------------------------------------------------------------
# operators


def _operator_doc(op: FiniteRankOperator) -> dict:
    return {
        "axes": _grid_doc(op.grid),
        "eigenvalues": op.eigenvalues.tolist(),
        "eigenfunctions": [w.values.tolist() for w in op.eigenfunctions],
    }


def _operator_from(raw: Any, where: str) -> FiniteRankOperator:
    if not isinstance(raw, dict):
        raise DataFormatError(f"{where}: expected an object")
    grid = _grid_from(_require(raw, "axes", where), f"{where}.axes")
    eigenvalues = _float_list(_require(raw, "eigenvalues", where), f"{where}.eigenvalues")
    funcs = _samples_from(
        _require(raw, "eigenfunctions", where), grid, f"{where}.eigenfunctions"
    )
    try:
        return FiniteRankOperator(
            grid=grid, eigenvalues=eigenvalues, eigenfunctions=tuple(funcs)
        )
    except FofregError as exc:
        raise DataFormatError(f"{where}: {exc}")


def save_operator(path: str, op: FiniteRankOperator) -> None:
    doc = {"format_version": FORMAT_VERSION, "kind": "operator"}
    doc.update(_operator_doc(op))
    atomic_write_text(path, _dump(doc))


def load_operator(path: str) -> FiniteRankOperator:
    doc = _load_json(path, "operator")
    return _operator_from(
        {k: doc.get(k) for k in ("axes", "eigenvalues", "eigenfunctions")}, path
    )


# ---------------------------------------------------------------------------
# models


def _fit_config_doc(cfg: FitConfig) -> dict:
    return {
        "lambda1": cfg.lambda1,
        "lambda2": cfg.lambda2,
        "bcd_tol": cfg.bcd_tol,
        "bcd_max_iters": cfg.bcd_max_iters,
        "cg_tol": cfg.cg_tol,
        "cg_max_iters": cfg.cg_max_iters,
        "backtrack_rho": cfg.backtrack_rho,
        "backtrack_max": cfg.backtrack_max,
        "theta_init": cfg.theta_init
        if isinstance(cfg.theta_init, str)
        else list(cfg.theta_init),
    }


def fit_config_from(raw: Any, where: str = "config") -> FitConfig:
    if not isinstance(raw, dict):
        raise DataFormatError(f"{where}: expected an object")
    kwargs: dict[str, Any] = {}
    for key in (
        "lambda1",
        "lambda2",
        "bcd_tol",
        "bcd_max_iters",
        "cg_tol",
        "cg_max_iters",
        "backtrack_rho",
        "backtrack_max",
        "theta_init",
    ):
        if key in raw:
            value = raw[key]
            if key == "theta_init" and isinstance(value, list):
                value = tuple(float(v) for v in value)
            kwargs[key] = value
    unknown = set(raw) - set(kwargs)
    if unknown:
        raise DataFormatError(f"{where}: unknown fields {sorted(unknown)}")
    try:
        return FitConfig(**kwargs)
    except FofregError as exc:
        raise DataFormatError(f"{where}: {exc}")


def save_model(path: str, model: MfRkhsModel) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "model",
        "kernels": [
            {"family": s.family, "bandwidth": s.bandwidth} for s in model.specs
        ],
        "operator": _operator_doc(model.operator),
        "theta": model.theta.tolist(),
        "u": [f.values.tolist() for f in model.u],
        "train_covariates": [
            _variable_doc(name, cov)
            for name, cov in zip(model.names, model.train_x)
        ],
        "config": _fit_config_doc(model.config),
        "report": {
            "iterations": model.report.iterations,
            "final_objective": model.report.final_objective,
            "converged": model.report.converged,
        },
    }
    atomic_write_text(path, _dump(doc))


def load_model(path: str) -> MfRkhsModel:
    doc = _load_json(path, "model")

    kernels_doc = _require(doc, "kernels", path)
    if not isinstance(kernels_doc, list) or len(kernels_doc) == 0:
        raise DataFormatError(f"{path}: kernels must be a non-empty list")
    specs = []
    for l, entry in enumerate(kernels_doc):
        where = f"kernels[{l}]"
        if not isinstance(entry, dict):
            raise DataFormatError(f"{where}: expected an object")
        try:
            specs.append(
                KernelSpec(
                    family=str(_require(entry, "family", where)),
                    bandwidth=float(_require(entry, "bandwidth", where)),
                )
            )
        except FofregError as exc:
            raise DataFormatError(f"{where}: {exc}")

    operator = _operator_from(_require(doc, "operator", path), "operator")
    theta = _float_list(_require(doc, "theta", path), "theta")
    u = _samples_from(_require(doc, "u", path), operator.grid, "u")

    train_doc = _require(doc, "train_covariates", path)
    if not isinstance(train_doc, list) or len(train_doc) != len(specs):
        raise DataFormatError(
            f"{path}: train_covariates must list one entry per kernel spec"
        )
    train_x = []
    names = []
    for l, entry in enumerate(train_doc):
        where = f"train_covariates[{l}]"
        if not isinstance(entry, dict):
            raise DataFormatError(f"{where}: expected an object")
        grid = _grid_from(_require(entry, "axes", where), f"{where}.axes")
        samples = _samples_from(
            _require(entry, "samples", where), grid, f"{where}.samples"
        )
        if len(samples) != len(u):
            raise DataFormatError(
                f"{where}: {len(samples)} samples but the model has {len(u)} u entries"
            )
        train_x.append(tuple(samples))
        names.append(str(entry.get("name", f"x{l + 1}")))

    cfg = fit_config_from(_require(doc, "config", path))
    report_doc = _require(doc, "report", path)
    if not isinstance(report_doc, dict):
        raise DataFormatError(f"{path}: report must be an object")
    report = FitReport(
        iterations=int(_require(report_doc, "iterations", "report")),
        final_objective=float(_require(report_doc, "final_objective", "report")),
        converged=bool(_require(report_doc, "converged", "report")),
    )

    try:
        return MfRkhsModel(
            specs=tuple(specs),
            operator=operator,
            theta=theta,
            u=tuple(u),
            train_x=tuple(train_x),
            names=tuple(names),
            config=cfg,
            report=report,
        )
    except FofregError as exc:
        raise DataFormatError(f"{path}: {exc}")


def model_roundtrip(model: MfRkhsModel) -> MfRkhsModel:
    """Serialize a model to disk and load it back.

    The returned model produces bit-identical predictions on any input,
    since every numeric payload survives the file format exactly.
    """
    fd, tmp = tempfile.mkstemp(prefix="fofreg-model-", suffix=".json")
    os.close(fd)
    try:
        save_model(tmp, model)
        return load_model(tmp)
    finally:
        os.unlink(tmp)


# ---------------------------------------------------------------------------
# predictions


def save_predictions(path: str, predictions: Sequence[FunctionSample]) -> None:
    if len(predictions) == 0:
        raise DataFormatError("no predictions to write")
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "predictions",
        "axes": _grid_doc(predictions[0].grid),
        "samples": [p.values.tolist() for p in predictions],
    }
    atomic_write_text(path, _dump(doc))


def load_predictions(path: str) -> list[FunctionSample]:
    doc = _load_json(path, "predictions")
    grid = _grid_from(_require(doc, "axes", path), "axes")
    return _samples_from(_require(doc, "samples", path), grid, "samples")
