from __future__ import annotations

import logging
from typing import Mapping, Sequence

import numpy as np
import statsmodels.api as sm
from scipy.linalg import qr

from ..errors import CollinearityError, EstimationError
from ..models.aggregate_table import AggregateTable
from ..models.design_matrix import CONSTANT_TERM, DesignMatrix
from ..models.estimate_set import EstimateSet
from ..models.linear_fit import LinearFit

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10


def _informative_covariates(table: AggregateTable, names: Sequence[str]) -> list[str]:
    """Drop covariates that are constant across geographies (they collapse into the share columns)."""
    kept = []
    for name in names:
        z = table.covariate(name)
        if np.ptp(z) == 0.0:
            logger.warning("[Goodman] covariate '%s' is constant across geographies; dropped", name)
            continue
        kept.append(name)
    return kept


def linear_basis(table: AggregateTable, names: Sequence[str], at: Mapping[str, float] | float | None = None) -> np.ndarray:
    """(1, z_1..z_p) per geography; `at` pins covariates to fixed values."""
    cols = [np.ones(table.G)]
    for name in names:
        if at is None:
            cols.append(table.covariate(name))
        else:
            value = at if np.isscalar(at) else at[name]
            cols.append(np.full(table.G, float(value)))
    return np.column_stack(cols)


def check_rank(design: DesignMatrix, X: np.ndarray | None = None) -> None:
    """Raise CollinearityError naming the columns that pivoted QR finds dependent."""
    X = design.matrix if X is None else X
    G, q = X.shape
    names = design.column_names
    if G < q:
        raise CollinearityError(
            f"Design has {q} columns but only {G} geographies; remove covariates or basis terms.",
            columns=names,
        )
    _, R, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOLERANCE * max(diag[0], 1e-300) * max(G, q)))
    if rank < q:
        dependent = [names[i] for i in piv[rank:]]
        raise CollinearityError(
            f"Design is rank deficient (rank {rank} < {q}); collinear columns: {', '.join(dependent)}. "
            "Remove a covariate that is a function of the shares (positivity fails).",
            columns=dependent,
        )


def fit_linear(
    table: AggregateTable,
    covariates: Sequence[str] = (),
    weighted: bool = False,
) -> LinearFit:
    """OLS (or N_g-weighted WLS) of every outcome column on shares interacted with (1, Z), HC1 covariance."""
    names = _informative_covariates(table, covariates) if covariates else []
    design = DesignMatrix(
        basis=linear_basis(table, names),
        shares=table.shares,
        terms=[CONSTANT_TERM, *names],
        categories=table.categories,
    )
    X = design.matrix
    check_rank(design, X)

    y_all = table.outcome_means
    results, coefs, covs = [], [], []
    for j in range(table.J):
        if weighted:
            model = sm.WLS(y_all[:, j], X, weights=table.population)
        else:
            model = sm.OLS(y_all[:, j], X)
        res = model.fit(cov_type="HC1")
        results.append(res)
        coefs.append(np.asarray(res.params))
        covs.append(np.asarray(res.cov_params()))
    logger.info(
        "[Goodman] fitted %d outcome(s) on %d columns (%s)",
        table.J, design.n_columns, "WLS" if weighted else "OLS",
    )
    return LinearFit(
        design=design,
        coefficients=np.vstack(coefs),
        covariance=np.stack(covs),
        results=results,
        outcomes=table.outcomes,
        covariate_names=names,
        weighted=weighted,
    )


def plugin_estimate(
    fit: LinearFit,
    table: AggregateTable,
    k: int,
    at_covariates: Mapping[str, float] | float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    N_gk-weighted average of fitted values with x̄ set to the one-hot vector of k
    and covariates as observed (or pinned by `at_covariates`).
    Returns (point, se) per outcome; se by the delta method on the HC1 covariance.
    """
    n_gk = table.category_population[:, k]
    total = n_gk.sum()
    if total <= 0:
        raise EstimationError(f"Category '{table.categories[k]}' has no population.")
    basis = linear_basis(table, fit.covariate_names, at_covariates)
    gradient = (n_gk / total) @ fit.design.counterfactual(k, basis)
    point = fit.coefficients @ gradient
    se = np.sqrt(np.maximum(np.einsum("q,jqr,r->j", gradient, fit.covariance, gradient), 0.0))
    return point, se


def goodman_fit(table: AggregateTable, weighted: bool = False) -> EstimateSet:
    """No-intercept regression of ȳ on all shares; β̂_k is the coefficient on x̄_k."""
    fit = fit_linear(table, (), weighted)
    se = np.sqrt(np.maximum(np.diagonal(fit.covariance, axis1=1, axis2=2), 0.0))
    estimates = EstimateSet(
        beta_hat=fit.coefficients,
        se=se,
        method="goodman",
        categories=table.categories,
        outcomes=table.outcomes,
        metadata={"weighted": weighted, "G": table.G},
    )
    _log_infeasible(estimates)
    return estimates


def extended_goodman_fit(
    table: AggregateTable,
    covariates: Sequence[str],
    weighted: bool = False,
    at_covariates: Mapping[str, float] | float | None = None,
) -> EstimateSet:
    """Shares x (1, Z) regression; β̂_k by the plug-in average, local f̂_k(z_g) kept."""
    fit = fit_linear(table, covariates, weighted)
    J, K = table.J, table.K
    beta = np.empty((J, K))
    se = np.empty((J, K))
    for k in range(K):
        beta[:, k], se[:, k] = plugin_estimate(fit, table, k, at_covariates)
    local = np.einsum("gd,jkd->gjk", fit.design.basis, fit.coefficients.reshape(J, K, fit.design.d))
    estimates = EstimateSet(
        beta_hat=beta,
        se=se,
        method="goodman-z",
        categories=table.categories,
        outcomes=table.outcomes,
        local_estimates=local,
        metadata={
            "weighted": weighted,
            "covariates": list(fit.covariate_names),
            "at_covariates": at_covariates,
            "G": table.G,
        },
    )
    _log_infeasible(estimates)
    return estimates


def _log_infeasible(estimates: EstimateSet) -> None:
    bad = ~estimates.feasible
    if bad.any():
        logger.warning(
            "[Goodman] %d estimate(s) outside [0, 1] (reported, not clipped)", int(bad.sum())
        )
