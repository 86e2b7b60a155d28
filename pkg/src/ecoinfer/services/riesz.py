from __future__ import annotations

import logging

import numpy as np
from scipy import linalg

from ..errors import EstimationError
from ..models.aggregate_table import AggregateTable
from ..models.design_matrix import DesignMatrix
from ..models.semiparametric_results import RieszFit

logger = logging.getLogger(__name__)


def category_weights(table: AggregateTable, k: int) -> np.ndarray:
    """N_gk / mean_g N_gk, so the weights average to one."""
    n_gk = table.category_population[:, k]
    mean = n_gk.mean()
    if mean <= 0:
        raise EstimationError(f"Category '{table.categories[k]}' has no population.")
    return n_gk / mean


def riesz_fit(design: DesignMatrix, table: AggregateTable, k: int, lambda_: float) -> RieszFit:
    """
    Automatic Riesz representer for β_k on the design's basis:
    ρ = (XᵀX/G + λI)⁻¹ M̂ with M̂_j = mean_g[w_g · x_j(one-hot k, z_g)],
    and realized weights α_k(g) = x(g)ᵀρ.
    """
    if lambda_ < 0:
        raise EstimationError("Riesz penalty must be nonnegative.")
    X = design.matrix
    G = X.shape[0]
    w = category_weights(table, k)
    target = (w[:, None] * design.counterfactual(k)).mean(axis=0)
    gram = X.T @ X / G + lambda_ * np.eye(X.shape[1])
    try:
        rho = linalg.solve(gram, target, assume_a="sym")
    except (linalg.LinAlgError, ValueError) as e:
        raise EstimationError(f"Riesz Gram matrix is singular at λ={lambda_:g}; use a positive penalty.") from e
    if not np.all(np.isfinite(rho)):
        raise EstimationError(f"Riesz Gram matrix is singular at λ={lambda_:g}; use a positive penalty.")
    fit = RieszFit(
        design=design,
        category=k,
        coefficients=rho,
        weights=X @ rho,
        target_moments=target,
        penalty=lambda_,
    )
    logger.debug("[Riesz] category %s: λ=%.3g, moment residual %.2e", table.categories[k], lambda_, fit.moment_residual())
    return fit


def riesz_only_estimate(fit: RieszFit, table: AggregateTable) -> np.ndarray:
    """mean_g α_k(g) ȳ_g per outcome."""
    return (fit.weights[:, None] * table.outcome_means).mean(axis=0)
