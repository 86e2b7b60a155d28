# src/main.py
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import pandas as pd

from config import DEFAULT_LOG_LEVEL, DEFAULT_OUTPUT, DEFAULT_SEED, DEFAULT_THREADS
from ecoinfer.errors import EcoInferError, UsageError
from ecoinfer.models.aggregate_table import AggregateTable
from ecoinfer.models.estimate_set import EstimateSet
from ecoinfer.models.ground_truth import GroundTruth
from ecoinfer.models.run_config import RunConfig
from ecoinfer.models.scenario_spec import ScenarioSpec
from ecoinfer.services.aggregation import aggregate
from ecoinfer.services.bounds import global_bounds, local_bounds
from ecoinfer.services.csv_loader import load_aggregate, load_micro, load_truth
from ecoinfer.services.diagnostics import diagnostics
from ecoinfer.services.estimators import METHOD_NAMES, MethodOptions, build_method, build_methods, parse_method_list
from ecoinfer.services.evaluation import evaluate, monte_carlo
from ecoinfer.services.exporter import export_run, table_frame, truth_frame
from ecoinfer.services.goodman import fit_linear
from ecoinfer.services.scenarios import generate

logger = logging.getLogger("ecoinfer")

SUBCOMMANDS = ("estimate", "bounds", "diagnose", "simulate", "validate")


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so every failure gets an error record."""

    def error(self, message: str) -> None:
        raise UsageError(message)


# ---------- Argument helpers ----------

def _pair(text: str | None, flag: str) -> tuple[float, float] | None:
    if text is None:
        return None
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"{flag} expects 'lo,hi', got {text!r}.") from None
    if not lo < hi:
        raise UsageError(f"{flag} needs lo < hi, got {text!r}.")
    return lo, hi


def _names(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [n.strip() for n in text.split(",") if n.strip()]


def _lambda(text: str) -> float | str:
    if text == "auto":
        return text
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"--lambda expects 'auto' or a number, got {text!r}.") from None
    if value < 0:
        raise UsageError("--lambda must be nonnegative.")
    return value


def _categories(text: str | None) -> list[str] | int | None:
    if text is None:
        return None
    return int(text) if text.isdigit() else _names(text)


# ---------- Parser ----------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, default=DEFAULT_OUTPUT, help="output directory")
    p.add_argument("--format", dest="output_format", choices=("csv", "json", "xlsx"), default="csv")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--threads", type=int, default=DEFAULT_THREADS)
    verbosity = p.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true", help="warnings and errors only")
    verbosity.add_argument("--verbose", action="store_true", help="debug output")


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", type=Path, help="aggregate CSV (geo, x_*, n, y_*/m_*, z_*)")
    p.add_argument("--micro", type=Path, help="micro CSV (geo, cat, y_*/y); aggregated on the fly")
    p.add_argument("--categories", help="category names (comma-separated) or count K for --micro")


def _add_method_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--covariates", help="comma-separated covariates visible to the method (default: all)")
    p.add_argument("--basis", help='basis spec, e.g. "z1:spline(5),z2:bins(5)"')
    p.add_argument("--riesz-basis", help="basis for the Riesz representer (default: --basis)")
    p.add_argument("--lambda", dest="lambda_", default="auto", help="ridge penalty or 'auto' (LOO)")
    p.add_argument("--bounds", help="box constraint 'lo,hi' on counterfactual predictions")
    p.add_argument("--weighted", action="store_true", help="population-weighted least squares")
    p.add_argument("--draws", type=int, default=2000, help="posterior draws per geography (king)")
    p.add_argument("--iters", type=int, default=5000, help="sampler iterations (rosen)")
    p.add_argument("--burnin", type=int, default=1000)
    p.add_argument("--chains", type=int, default=2)
    p.add_argument("--orientation", choices=("column", "row"), default="column")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ecoinfer", description="Ecological inference from aggregate tables.")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)

    p = sub.add_parser("estimate", help="global estimates with one method")
    _add_input(p)
    p.add_argument("--method", required=True, choices=METHOD_NAMES)
    _add_method_options(p)
    _add_common(p)

    p = sub.add_parser("bounds", help="Duncan–Davis bounds")
    _add_input(p)
    p.add_argument("--outcome-range", default="0,1", help="outcome range 'lo,hi'")
    p.add_argument("--global-method", choices=("weighted", "stacked"), default="weighted")
    _add_common(p)

    p = sub.add_parser("diagnose", help="leverage, Cook's distance and extrapolation gaps")
    _add_input(p)
    p.add_argument("--covariates", help="covariates of the extended fit (default: none)")
    p.add_argument("--weighted", action="store_true")
    _add_common(p)

    p = sub.add_parser("simulate", help="synthetic data with known truth")
    p.add_argument("--scenario", required=True, choices=("A", "B", "C", "D", "E", "R"))
    p.add_argument("--G", type=int, default=None, help="number of geographies")
    p.add_argument("--K", type=int, default=2, help="categories (scenario R)")
    p.add_argument("--J", type=int, default=2, help="outcomes (scenario R)")
    p.add_argument("--shape", choices=("logistic", "linear"), default="logistic", help="confounder curve (C/D)")
    p.add_argument("--counts", action="store_true", help="draw integer cell counts")
    _add_common(p)

    p = sub.add_parser("validate", help="score methods against known truth")
    _add_input(p)
    p.add_argument("--truth", type=Path, help="truth CSV written by simulate")
    p.add_argument("--scenario", choices=("A", "B", "C", "D", "E", "R"), help="Monte Carlo scenario")
    p.add_argument("--G", type=int, default=None)
    p.add_argument("--shape", choices=("logistic", "linear"), default="logistic")
    p.add_argument("--counts", action="store_true")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--methods", required=True, help="comma-separated method names")
    _add_method_options(p)
    _add_common(p)
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = DEFAULT_LOG_LEVEL.upper()
    if getattr(args, "quiet", False):
        level = "WARNING"
    elif getattr(args, "verbose", False):
        level = "DEBUG"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


# ---------- Inputs ----------

def _inputs(args: argparse.Namespace) -> dict[str, str]:
    names = ("data", "micro", "truth", "categories")
    return {n: str(getattr(args, n)) for n in names if getattr(args, n, None) is not None}


def _load(args: argparse.Namespace) -> tuple[AggregateTable, GroundTruth | None]:
    if args.data is not None and args.micro is not None:
        raise UsageError("Give either --data or --micro, not both.")
    if args.data is not None:
        return load_aggregate(args.data), None
    if args.micro is not None:
        return aggregate(load_micro(args.micro, _categories(args.categories)))
    raise UsageError("An input is required: --data or --micro.")


def _method_options(args: argparse.Namespace) -> MethodOptions:
    return MethodOptions(
        covariates=_names(args.covariates),
        basis=args.basis,
        riesz_basis=args.riesz_basis,
        lambda_=_lambda(args.lambda_),
        bounds=_pair(args.bounds, "--bounds"),
        weighted=args.weighted,
        draws=args.draws,
        iters=args.iters,
        burnin=args.burnin,
        chains=args.chains,
        orientation=args.orientation,
        seed=args.seed,
        threads=args.threads,
    )


def _option_record(options: MethodOptions) -> dict:
    record = {k: v for k, v in vars(options).items() if k not in ("seed", "threads")}
    if record["bounds"] is not None:
        record["bounds"] = list(record["bounds"])
    return record


def _local_rows(estimates: EstimateSet, table: AggregateTable) -> list[dict]:
    local = estimates.local_estimates
    if local is None:
        return []
    rows = []
    for g, geo in enumerate(table.geo):
        for j, outcome in enumerate(estimates.outcomes):
            for k, category in enumerate(estimates.categories):
                rows.append({"geo": geo, "outcome": outcome, "category": category,
                             "estimate": float(local[g, j, k])})
    return rows


def _score_rows(estimates: EstimateSet, table: AggregateTable) -> list[dict]:
    """Per-geography DML scores s_g; their mean is the estimate."""
    rows = []
    for result in estimates.metadata.get("dml", []):
        category = estimates.categories[result.category]
        for j, outcome in enumerate(result.outcomes):
            for g, geo in enumerate(table.geo):
                rows.append({"geo": geo, "outcome": outcome, "category": category,
                             "score": float(result.scores[j, g])})
    return rows


# ---------- Subcommands ----------

def cmd_estimate(args: argparse.Namespace) -> tuple[dict, RunConfig]:
    table, _ = _load(args)
    options = _method_options(args)
    if options.covariates is not None:
        table = table.select_covariates(options.covariates)
    estimates = build_method(args.method, options)(table)
    tables: dict = {"estimates": estimates.rows()}
    local = _local_rows(estimates, table)
    if local:
        tables["local_estimates"] = local
    scores = _score_rows(estimates, table)
    if scores:
        tables["scores"] = scores
    config = RunConfig(subcommand="estimate", inputs=_inputs(args), method=args.method,
                       options=_option_record(options), basis=args.basis, seed=args.seed,
                       output_dir=args.out, output_format=args.output_format)
    return tables, config


def cmd_bounds(args: argparse.Namespace) -> tuple[dict, RunConfig]:
    table, _ = _load(args)
    outcome_range = _pair(args.outcome_range, "--outcome-range")
    local = local_bounds(table, outcome_range)
    result = global_bounds(table, local, method=args.global_method)
    config = RunConfig(subcommand="bounds", inputs=_inputs(args),
                       options={"outcome_range": list(outcome_range), "global_method": args.global_method},
                       seed=args.seed, output_dir=args.out, output_format=args.output_format)
    return {"bounds_local": result.rows(), "bounds_global": result.global_rows()}, config


def cmd_diagnose(args: argparse.Namespace) -> tuple[dict, RunConfig]:
    table, _ = _load(args)
    covariates = _names(args.covariates) or []
    fit = fit_linear(table, covariates, args.weighted)
    report = diagnostics(fit, table)
    config = RunConfig(subcommand="diagnose", inputs=_inputs(args),
                       options={"covariates": covariates, "weighted": args.weighted},
                       seed=args.seed, output_dir=args.out, output_format=args.output_format)
    return {"diagnostics": report.rows(), "extrapolation": report.extrapolation_rows()}, config


def _scenario(args: argparse.Namespace) -> ScenarioSpec:
    return ScenarioSpec(
        scenario=args.scenario,
        G=args.G,
        K=getattr(args, "K", 2) if args.scenario == "R" else 2,
        J=getattr(args, "J", 2) if args.scenario == "R" else 1,
        confounder_shape=args.shape,
        outcome_counts=args.counts,
        seed=args.seed,
    )


def cmd_simulate(args: argparse.Namespace) -> tuple[dict, RunConfig]:
    spec = _scenario(args)
    table, truth = generate(spec)
    options = {k: v for k, v in spec.to_dict().items() if k != "seed"}
    config = RunConfig(subcommand="simulate", options=options, seed=args.seed,
                       output_dir=args.out, output_format=args.output_format)
    return {"data": table_frame(table), "truth": truth_frame(truth)}, config


def cmd_validate(args: argparse.Namespace) -> tuple[dict, RunConfig]:
    options = _method_options(args)
    names = parse_method_list(args.methods)
    methods = build_methods(names, options)
    record = {"methods": names, **_option_record(options)}
    if args.scenario is not None:
        if args.data is not None or args.micro is not None:
            raise UsageError("--scenario cannot be combined with --data or --micro.")
        if args.replicates < 1:
            raise UsageError("--replicates must be positive.")
        spec = _scenario(args)
        report = monte_carlo(spec, methods, args.replicates, args.threads)
        record.update({"scenario": spec.scenario, "G": spec.n_geographies, "replicates": args.replicates,
                       "shape": spec.confounder_shape, "counts": spec.outcome_counts})
    else:
        table, truth = _load(args)
        if args.truth is not None:
            truth = load_truth(args.truth, table)
        if truth is None:
            raise UsageError("validate needs --truth with --data (or --micro, or --scenario).")
        report = evaluate(methods, table, truth)
    tables: dict = {
        "metrics": report.cells,
        "metrics_summary": report.summary,
        "metrics_long": report.long_format(),
    }
    if report.failures:
        tables["failures"] = pd.DataFrame(
            [{"method": m, "error": e} for m, e in sorted(report.failures.items())]
        )
    config = RunConfig(subcommand="validate", inputs=_inputs(args), options=record, seed=args.seed,
                       output_dir=args.out, output_format=args.output_format)
    return tables, config


COMMANDS = {
    "estimate": cmd_estimate,
    "bounds": cmd_bounds,
    "diagnose": cmd_diagnose,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def _error_record(exc: BaseException, exit_code: int) -> None:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": exit_code}
    print(json.dumps(record), file=sys.stderr)


def run(argv: Sequence[str] | None = None) -> int:
    """Parses `argv`, runs one subcommand and writes its outputs. Returns the exit status."""
    try:
        args = build_parser().parse_args(argv)
        if args.subcommand not in COMMANDS:
            raise UsageError(f"Choose a subcommand: {', '.join(SUBCOMMANDS)}.")
        _configure_logging(args)
        tables, config = COMMANDS[args.subcommand](args)
        written = export_run(tables, config, args.out)
        logger.info("[CLI] %s wrote %d file(s) to %s", args.subcommand, len(written), args.out)
        return 0
    except EcoInferError as exc:
        logger.debug("[CLI] failure", exc_info=True)
        _error_record(exc, exc.exit_code)
        return exc.exit_code
    except Exception as exc:
        logger.exception("[CLI] unexpected failure")
        _error_record(exc, 1)
        return 1


if __name__ == "__main__":
    sys.exit(run())
