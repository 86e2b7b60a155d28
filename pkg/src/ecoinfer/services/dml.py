from __future__ import annotations

import logging
from typing import Literal, Sequence

import numpy as np

from ..models.aggregate_table import AggregateTable
from ..models.basis_spec import BasisSpec
from ..models.estimate_set import EstimateSet
from ..models.semiparametric_results import DmlResult, RidgeFit
from .basis import expand_basis, parse_basis
from .ridge import ridge_fit
from .riesz import category_weights, riesz_fit

logger = logging.getLogger(__name__)

Penalty = float | Literal["auto"]


def _spec(spec: BasisSpec | str | None) -> BasisSpec:
    return spec if isinstance(spec, BasisSpec) else parse_basis(spec)


def outcome_fits(
    table: AggregateTable,
    spec: BasisSpec | str | None,
    lambda_: Penalty = "auto",
    bounds: tuple[float, float] | None = None,
    lambda_grid: Sequence[float] | None = None,
) -> list[RidgeFit]:
    """One ridge fit per outcome column on the interacted basis."""
    design = expand_basis(table, _spec(spec))
    grid = lambda_grid if lambda_ == "auto" else [float(lambda_)]
    y_all = table.outcome_means
    return [ridge_fit(design, y_all[:, j], grid, bounds) for j in range(table.J)]


def dml_estimate(
    table: AggregateTable,
    spec: BasisSpec | str | None,
    k: int,
    riesz_spec: BasisSpec | str | None = None,
    lambda_: Penalty = "auto",
    riesz_lambda: float | None = None,
    bounds: tuple[float, float] | None = None,
    lambda_grid: Sequence[float] | None = None,
    ridge: list[RidgeFit] | None = None,
) -> DmlResult:
    """
    Debiased estimate of β_k without sample splitting:
    s_g = f̂_k(z_g)·w_g + α_k(g)·(ȳ_g − ŷ_g), w_g = N_gk / mean(N_gk);
    point = mean(s_g), se = sd(s_g)/√G.
    """
    weights = category_weights(table, k)
    if ridge is None:
        ridge = outcome_fits(table, spec, lambda_, bounds, lambda_grid)
    G = table.G
    riesz_design = ridge[0].design if riesz_spec is None else expand_basis(table, _spec(riesz_spec))
    penalty = riesz_lambda if riesz_lambda is not None else ridge[0].penalty / G
    riesz = riesz_fit(riesz_design, table, k, penalty)

    y_all = table.outcome_means
    scores = np.empty((table.J, G))
    plugin = np.empty(table.J)
    for j, fit in enumerate(ridge):
        f_k = fit.counterfactual_predictions()[:, k]
        plug = f_k * weights
        scores[j] = plug + riesz.weights * (y_all[:, j] - fit.fitted())
        plugin[j] = plug.mean()
    point = scores.mean(axis=1)
    se = scores.std(axis=1, ddof=1) / np.sqrt(G) if G > 1 else np.zeros(table.J)
    logger.info(
        "[DML] category %s: point %s, se %s",
        table.categories[k],
        np.array2string(point, precision=4),
        np.array2string(se, precision=4),
    )
    return DmlResult(category=k, outcomes=table.outcomes, scores=scores, point=point, se=se,
                     plugin=plugin, ridge=ridge, riesz=riesz)


def dml_estimates(
    table: AggregateTable,
    spec: BasisSpec | str | None,
    riesz_spec: BasisSpec | str | None = None,
    lambda_: Penalty = "auto",
    riesz_lambda: float | None = None,
    bounds: tuple[float, float] | None = None,
    lambda_grid: Sequence[float] | None = None,
) -> EstimateSet:
    """Every category; the outcome regressions are fitted once and shared."""
    spec = _spec(spec)
    ridge = outcome_fits(table, spec, lambda_, bounds, lambda_grid)
    results = [
        dml_estimate(table, spec, k, riesz_spec, lambda_, riesz_lambda, bounds, lambda_grid, ridge=ridge)
        for k in range(table.K)
    ]
    beta = np.column_stack([r.point for r in results])
    se = np.column_stack([r.se for r in results])
    local = np.stack([fit.counterfactual_predictions() for fit in ridge], axis=1)   # G x J x K
    return EstimateSet(
        beta_hat=beta,
        se=se,
        method="dml" if bounds is None else "dml-bounded",
        categories=table.categories,
        outcomes=table.outcomes,
        local_estimates=local,
        metadata={
            "basis": spec.describe(),
            "riesz_basis": _spec(riesz_spec).describe() if riesz_spec is not None else spec.describe(),
            "lambda": [fit.penalty for fit in ridge],
            "riesz_lambda": [r.riesz.penalty for r in results],
            "bounds": bounds,
            "dml": results,
        },
    )


def ridge_plugin_estimates(
    table: AggregateTable,
    spec: BasisSpec | str | None,
    lambda_: Penalty = "auto",
    bounds: tuple[float, float] | None = None,
) -> EstimateSet:
    """Plug-in average of ridge counterfactual predictions (no Riesz correction, no standard errors)."""
    spec = _spec(spec)
    ridge = outcome_fits(table, spec, lambda_, bounds)
    weights = np.column_stack([category_weights(table, k) for k in range(table.K)])   # G x K
    local = np.stack([fit.counterfactual_predictions() for fit in ridge], axis=1)
    beta = (local * weights[:, None, :]).mean(axis=0)
    return EstimateSet(
        beta_hat=beta,
        se=np.full_like(beta, np.nan),
        method="ridge" if bounds is None else "ridge-bounded",
        categories=table.categories,
        outcomes=table.outcomes,
        local_estimates=local,
        metadata={
            "basis": spec.describe(),
            "lambda": [fit.penalty for fit in ridge],
            "kkt_residual": [fit.kkt_residual for fit in ridge],
        },
    )
