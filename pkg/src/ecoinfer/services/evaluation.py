from __future__ import annotations

import logging
from typing import Mapping

import numpy as np
import pandas as pd

from ..errors import DataValidationError
from ..models.aggregate_table import AggregateTable
from ..models.estimate_set import EstimateSet
from ..models.ground_truth import GroundTruth
from ..models.metric_report import MetricReport
from ..models.scenario_spec import ScenarioSpec
from .estimators import MethodFn
from .parallel import derived_seeds, parallel_map
from .scenarios import generate, with_seed

logger = logging.getLogger(__name__)

CELL_COLUMNS = ["method", "outcome", "category", "estimate", "se", "truth", "error", "abs_error",
                "lower", "upper", "covered"]


def _cell_rows(estimates: EstimateSet, truth: GroundTruth, name: str) -> list[dict]:
    """Cells shared by the estimate and the truth, matched by outcome and category name."""
    rows = []
    for j, outcome in enumerate(estimates.outcomes):
        if outcome not in truth.outcomes:
            continue
        tj = truth.outcomes.index(outcome)
        for k, category in enumerate(estimates.categories):
            if category not in truth.categories:
                continue
            target = float(truth.global_means[tj, truth.categories.index(category)])
            if np.isnan(target):
                continue
            estimate = float(estimates.beta_hat[j, k])
            lower, upper = float(estimates.lower[j, k]), float(estimates.upper[j, k])
            rows.append({
                "method": name,
                "outcome": outcome,
                "category": category,
                "estimate": estimate,
                "se": float(estimates.se[j, k]),
                "truth": target,
                "error": estimate - target,
                "abs_error": abs(estimate - target),
                "lower": lower,
                "upper": upper,
                "covered": float(lower <= target <= upper) if np.isfinite(lower) and np.isfinite(upper) else np.nan,
            })
    return rows


def _summarize(cells: pd.DataFrame, by: list[str]) -> pd.DataFrame:
    if cells.empty:
        return pd.DataFrame(columns=by + ["me", "mae", "coverage", "n_cells"])
    grouped = cells.groupby(by, sort=False)
    return grouped.agg(
        me=("error", "mean"),
        mae=("abs_error", "mean"),
        coverage=("covered", "mean"),
        n_cells=("error", "size"),
    ).reset_index()


def evaluate(
    methods: Mapping[str, MethodFn],
    data: AggregateTable,
    truth: GroundTruth,
) -> MetricReport:
    """
    Runs every method on one table and scores it against the truth.
    A method that raises is recorded in `failures` and skipped. Cells without
    an interval (NaN bounds) have NaN `covered` and drop out of the coverage rate.
    """
    rows: list[dict] = []
    failures: dict[str, str] = {}
    for name, method in methods.items():
        try:
            estimates = method(data)
        except Exception as exc:
            logger.warning("[Evaluate] %s failed: %s", name, exc)
            failures[name] = f"{type(exc).__name__}: {exc}"
            continue
        rows.extend(_cell_rows(estimates, truth, name))
    cells = pd.DataFrame(rows, columns=CELL_COLUMNS)
    summary = _summarize(cells, ["method"])
    for _, row in summary.iterrows():
        logger.info("[Evaluate] %s: ME %.4f, MAE %.4f, coverage %.2f",
                    row["method"], row["me"], row["mae"], row["coverage"])
    return MetricReport(cells=cells, summary=summary, failures=failures)


def monte_carlo(
    spec: ScenarioSpec,
    methods: Mapping[str, MethodFn],
    replicates: int,
    threads: int | None = None,
) -> MetricReport:
    """
    Replicates of `spec` with seeds derived from `spec.seed`. `cells` keeps one row
    per replicate x method x cell; `summary` has one row per method x cell with
    bias (me), MAE, empirical SD of the estimates, mean se and coverage rate.
    """
    if replicates < 1:
        raise ValueError("replicates must be positive.")
    seeds = derived_seeds(spec.seed, replicates)

    def one(item: tuple[int, int]) -> MetricReport:
        index, seed = item
        table, truth = generate(with_seed(spec, seed))
        report = evaluate(methods, table, truth)
        report.cells.insert(0, "replicate", index)
        return report

    reports = parallel_map(one, list(enumerate(seeds)), threads)
    cells = pd.concat([r.cells for r in reports], ignore_index=True)
    failures: dict[str, str] = {}
    for index, report in enumerate(reports):
        for name, message in report.failures.items():
            failures.setdefault(name, f"replicate {index}: {message}")

    by = ["method", "outcome", "category"]
    summary = _summarize(cells, by)
    if not cells.empty:
        extra = cells.groupby(by, sort=False).agg(
            sd=("estimate", "std"),
            mean_se=("se", "mean"),
            truth=("truth", "mean"),
            replicates=("replicate", "nunique"),
        ).reset_index()
        summary = summary.merge(extra, on=by)
    logger.info("[MonteCarlo] scenario %s: %d replicates, %d method(s), %d failure(s)",
                spec.scenario, replicates, len(methods), len(failures))
    return MetricReport(cells=cells, summary=summary, failures=failures)


def polarization_gap_bias(report: MetricReport, outcome: str, first: str, second: str) -> pd.Series:
    """
    Signed bias per method of the estimated gap β[first] − β[second]; positive means
    the method overstates how far apart the two categories are.
    """
    cells = report.cells[report.cells["outcome"] == outcome]
    keys = ["method"] + (["replicate"] if "replicate" in cells else [])
    est = cells.pivot_table(index=keys, columns="category", values="estimate")
    true = cells.pivot_table(index=keys, columns="category", values="truth")
    missing = {first, second} - set(est.columns)
    if missing:
        raise ValueError(f"Categories not in report: {', '.join(sorted(missing))}.")
    gap_error = (est[first] - est[second]).abs() - (true[first] - true[second]).abs()
    return gap_error.groupby(level="method").mean().rename("gap_bias")


def reference_seed(
    spec: ScenarioSpec,
    method: MethodFn,
    target: float,
    tolerance: float,
    cell: tuple[int, int] = (0, 0),
    max_seed: int = 1000,
) -> int:
    """First seed in [0, max_seed) whose estimate of `cell` lands within `tolerance` of `target`."""
    j, k = cell
    for seed in range(max_seed):
        table, _ = generate(with_seed(spec, seed))
        estimate = float(method(table).beta_hat[j, k])
        if abs(estimate - target) <= tolerance:
            logger.info("[Calibrate] scenario %s: seed %d gives %.4f (target %.4f)", spec.scenario, seed, estimate, target)
            return seed
    raise DataValidationError(f"No seed below {max_seed} puts the estimate within {tolerance:g} of {target:g}.")
