"""Command-line interface.

Subcommands
-----------
- ``simulate``  write a scripted-scenario dataset (with its truth block)
- ``fit``       fit a model to a dataset file, write model and report files
- ``predict``   write predictions for the covariates of a dataset file
- ``evaluate``  print the mean squared prediction error on a dataset
- ``repro``     rerun one replication table and write a CSV of
                per-covariate selection counts and mean MSE

Standard output carries only requested results; diagnostics go to standard
error.  Exit status is 0 exactly when the requested artifact was completely
written.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from typing import Any, Sequence

from .dataio import (
    DataFormatError,
    atomic_write_text,
    fit_config_from,
    load_dataset,
    load_model,
    load_operator,
    save_dataset,
    save_model,
    save_predictions,
)
from .dataset import Dataset
from .errors import FofregError
from .kernels import KERNEL_FAMILIES, FiniteRankOperator, KernelSpec, make_sine_projection
from .model import evaluate_mse, fit, predict, selected_variables
from .simgen import ScenarioConfig, child_seed, generate, run_replications
from .solver import FitConfig

__all__ = ["RunConfig", "run_command", "main"]

# Sine-projection rank defaults per response-domain dimension, used when a
# fit has no explicit operator configuration.
DEFAULT_SINE_COUNTS = {1: (50,), 2: (8, 8)}

M_CODES = {"5": frozenset({5}), "135": frozenset({1, 3, 5}), "1345": frozenset({1, 3, 4, 5})}

TABLE_SCENARIO = {1: "one-dim", 2: "one-dim", 3: "multi-dim", 4: "multi-dim"}
TABLE_SIGMA = {1: 0.01, 2: 0.1, 3: 0.01, 4: 0.1}
TABLE_KERNEL_ORDER = ("exponential", "gaussian", "cauchy")
TABLE_M_ORDER = ("5", "135", "1345")

REPRO_HEADER = ["scenario", "M", "kernel", "sigma", "x1", "x2", "x3", "x4", "x5", "mean_mse", "reps"]


@dataclass(frozen=True)
class RunConfig:
    """Fit, kernel, and operator settings read from a config file."""

    fit: FitConfig
    kernels: tuple[KernelSpec, ...] | KernelSpec
    sine_counts: tuple[int, ...] | None
    operator_path: str | None

    def kernel_specs(self, p: int) -> tuple[KernelSpec, ...]:
        if isinstance(self.kernels, KernelSpec):
            return (self.kernels,) * p
        if len(self.kernels) != p:
            raise DataFormatError(
                f"config lists {len(self.kernels)} kernels but the dataset has {p} covariates"
            )
        return self.kernels

    def operator_for(self, data: Dataset) -> FiniteRankOperator:
        if self.operator_path is not None:
            return load_operator(self.operator_path)
        counts = self.sine_counts
        if counts is None:
            ndim = data.response_grid.ndim
            counts = DEFAULT_SINE_COUNTS.get(ndim)
            if counts is None:
                raise DataFormatError(
                    f"no default operator for a {ndim}-dimensional response; "
                    "set operator.sine_counts or operator.spectral_file in the config"
                )
        return make_sine_projection(counts, data.response_grid)


def _kernel_spec_from(raw: Any, where: str) -> KernelSpec:
    if not isinstance(raw, dict):
        raise DataFormatError(f"{where}: expected an object")
    try:
        return KernelSpec(
            family=str(raw.get("family", "gaussian")),
            bandwidth=float(raw.get("bandwidth", 1.0)),
        )
    except FofregError as exc:
        raise DataFormatError(f"{where}: {exc}")


def load_run_config(path: str | None) -> RunConfig:
    """Read a config file; every section is optional and has a default."""
    doc: dict = {}
    if path is not None:
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
            raise DataFormatError(f"{path}: expected a JSON object")

    fit_cfg = fit_config_from(doc.get("fit", {}), "fit")

    kernel_doc = doc.get("kernel", {})
    kernels: tuple[KernelSpec, ...] | KernelSpec
    if isinstance(kernel_doc, list):
        kernels = tuple(
            _kernel_spec_from(entry, f"kernel[{l}]") for l, entry in enumerate(kernel_doc)
        )
    else:
        kernels = _kernel_spec_from(kernel_doc, "kernel")

    sine_counts = None
    operator_path = None
    op_doc = doc.get("operator")
    if op_doc is not None:
        if not isinstance(op_doc, dict):
            raise DataFormatError("operator: expected an object")
        if "sine_counts" in op_doc:
            sine_counts = tuple(int(c) for c in op_doc["sine_counts"])
        if "spectral_file" in op_doc:
            operator_path = str(op_doc["spectral_file"])
        if sine_counts is not None and operator_path is not None:
            raise DataFormatError(
                "operator: give either sine_counts or spectral_file, not both"
            )

    return RunConfig(
        fit=fit_cfg, kernels=kernels, sine_counts=sine_counts, operator_path=operator_path
    )


def _parse_m_code(code: str) -> frozenset[int]:
    if code not in M_CODES:
        raise DataFormatError(
            f"unknown zero-set code {code!r}; expected one of {sorted(M_CODES)}"
        )
    return M_CODES[code]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fofreg",
        description="Function-on-function kernel regression with variable selection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a scripted-scenario dataset")
    sim.add_argument("--scenario", choices=["one-dim", "multi-dim"], required=True)
    sim.add_argument("--m", default="5", help="zero-set code: 5, 135, or 1345")
    sim.add_argument("--kernel", choices=list(KERNEL_FAMILIES), default="gaussian")
    sim.add_argument("--sigma", type=float, default=0.01, help="noise standard deviation")
    sim.add_argument("--n", type=int, default=50, help="sample count")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--u-index", choices=["reindexed", "literal"], default="reindexed",
                     help="coefficient index split for the multi-dim scenario")
    sim.add_argument("--out", required=True, help="output dataset file")

    fit_p = sub.add_parser("fit", help="fit a model to a dataset file")
    fit_p.add_argument("--data", required=True)
    fit_p.add_argument("--config", default=None, help="JSON config file (optional)")
    fit_p.add_argument("--model-out", required=True)
    fit_p.add_argument("--report-out", default=None)

    pred = sub.add_parser("predict", help="predict responses for a dataset's covariates")
    pred.add_argument("--model", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument("--out", required=True)

    ev = sub.add_parser("evaluate", help="print mean squared prediction error")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)

    rep = sub.add_parser("repro", help="rerun one replication table, write a CSV")
    rep.add_argument("--table", type=int, choices=[1, 2, 3, 4], required=True)
    rep.add_argument("--reps", type=int, default=20)
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--out", required=True)

    return parser


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = ScenarioConfig(
        scenario=args.scenario,
        n=args.n,
        kernel_family=args.kernel,
        sigma_noise=args.sigma,
        zero_set=_parse_m_code(args.m),
        seed=args.seed,
        reindexed_u=(args.u_index == "reindexed"),
    )
    save_dataset(args.out, generate(cfg))
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    run_cfg = load_run_config(args.config)
    data = load_dataset(args.data)
    specs = run_cfg.kernel_specs(data.p)
    operator = run_cfg.operator_for(data)
    model = fit(data, specs, operator, run_cfg.fit)
    save_model(args.model_out, model)
    if args.report_out is not None:
        report = {
            "iterations": model.report.iterations,
            "final_objective": model.report.final_objective,
            "converged": model.report.converged,
            "theta": model.theta.tolist(),
            "selected": selected_variables(model),
        }
        atomic_write_text(args.report_out, json.dumps(report, indent=1))
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    data = load_dataset(args.data)
    if data.p != model.p:
        raise DataFormatError(
            f"dataset has {data.p} covariates but the model expects {model.p}"
        )
    predictions = [predict(model, data.covariate_tuple(i)) for i in range(data.n)]
    save_predictions(args.out, predictions)
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    data = load_dataset(args.data)
    mse = evaluate_mse(model, data)
    print(f"{mse:.6f}")
    return 0


def _cmd_repro(args: argparse.Namespace) -> int:
    table = args.table
    scenario = TABLE_SCENARIO[table]
    sigma = TABLE_SIGMA[table]
    rows = []
    cell = 0
    for m_code in TABLE_M_ORDER:
        for family in TABLE_KERNEL_ORDER:
            cfg = ScenarioConfig(
                scenario=scenario,
                n=50,
                kernel_family=family,
                sigma_noise=sigma,
                zero_set=_parse_m_code(m_code),
                seed=child_seed(args.seed, cell),
            )
            summary = run_replications(cfg, args.reps)
            for message in summary.failures:
                print(f"table {table} {m_code}/{family}: {message}", file=sys.stderr)
            rows.append(
                [scenario, m_code, family, repr(sigma)]
                + [str(c) for c in summary.selection_counts]
                + [repr(summary.mean_mse), str(summary.reps)]
            )
            cell += 1
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(REPRO_HEADER)
    writer.writerows(rows)
    atomic_write_text(args.out, buffer.getvalue())
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "repro": _cmd_repro,
}


def run_command(argv: Sequence[str]) -> int:
    """Run one CLI invocation; returns the process exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (FofregError, OSError) as exc:
        print(f"fofreg: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
