from __future__ import annotations

import logging

import numpy as np

from ..errors import EstimationError
from ..models.aggregate_table import AggregateTable
from ..models.estimate_set import EstimateSet
from ..models.king_results import EmFit

logger = logging.getLogger(__name__)

EM_TOLERANCE = 1e-8
EM_MAX_ITER = 20_000
STABILIZING_RIDGE = 1e-10


def local_update(shares: np.ndarray, y: np.ndarray, beta: np.ndarray, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    E[B_g | ȳ_g] = B + Σx̄_g (x̄_gᵀΣx̄_g)⁻¹ (ȳ_g − x̄_gᵀB) and the matching
    conditional covariance Σ − Σx̄x̄ᵀΣ / (x̄ᵀΣx̄). Returns (G x K, G x K x K).
    """
    sx = shares @ sigma                                   # G x K (Σ symmetric)
    q = np.einsum("gk,gk->g", sx, shares)                 # x̄ᵀΣx̄
    if np.any(q <= 0):
        raise EstimationError("x̄ᵀΣx̄ is not positive; covariance has collapsed.")
    resid = y - shares @ beta
    means = beta[None, :] + sx * (resid / q)[:, None]
    covs = sigma[None, :, :] - np.einsum("gi,gj->gij", sx, sx) / q[:, None, None]
    return means, covs


def untruncated_em(
    table: AggregateTable,
    outcome: int = 0,
    tol: float = EM_TOLERANCE,
    max_iter: int = EM_MAX_ITER,
) -> EmFit:
    """
    B_g ~ N(B, Σ) with ȳ_g = x̄_gᵀB_g exactly. EM alternates the conditional
    moments of B_g and the updates of (B, Σ); Σ is ridge-stabilized if it collapses.
    """
    x = table.shares
    y = table.outcome_means[:, outcome]
    G, K = x.shape
    beta = np.linalg.lstsq(x, y, rcond=None)[0]
    resid_var = max(float(np.var(y - x @ beta)), 1e-4)
    sigma = np.eye(K) * resid_var
    stabilized = False
    converged = False

    iteration = 0
    for iteration in range(1, max_iter + 1):
        means, covs = local_update(x, y, beta, sigma)
        new_beta = means.mean(axis=0)
        centred = means - new_beta
        new_sigma = covs.mean(axis=0) + centred.T @ centred / G
        new_sigma = 0.5 * (new_sigma + new_sigma.T)
        if np.linalg.eigvalsh(new_sigma)[0] < STABILIZING_RIDGE:
            new_sigma = new_sigma + STABILIZING_RIDGE * np.eye(K)
            if not stabilized:
                logger.warning("[EM] covariance collapsing; ridge-stabilized")
            stabilized = True
        change = max(np.max(np.abs(new_beta - beta)), np.max(np.abs(new_sigma - sigma)))
        beta, sigma = new_beta, new_sigma
        if change < tol:
            converged = True
            break
    if not converged:
        logger.warning("[EM] no convergence after %d iterations", max_iter)

    local, _ = local_update(x, y, beta, sigma)
    logger.info("[EM] %s after %d iterations; B̂ = %s",
                "converged" if converged else "stopped", iteration, np.array2string(beta, precision=4))
    return EmFit(beta=beta, sigma=sigma, local_means=local, iterations=iteration,
                 converged=converged, stabilized=stabilized)


def em_estimates(table: AggregateTable) -> EstimateSet:
    """
    Every outcome column. The reported se is sqrt(diag Σ̂ / G), the spread of a
    mean of G local draws; it ignores the uncertainty in Σ̂.
    """
    fits = [untruncated_em(table, j) for j in range(table.J)]
    beta = np.vstack([f.beta for f in fits])
    se = np.vstack([np.sqrt(np.maximum(np.diag(f.sigma), 0.0) / table.G) for f in fits])
    return EstimateSet(
        beta_hat=beta,
        se=se,
        method="king-em",
        categories=table.categories,
        outcomes=table.outcomes,
        local_estimates=np.stack([f.local_means for f in fits], axis=1),
        metadata={
            "iterations": [f.iterations for f in fits],
            "converged": [f.converged for f in fits],
            "stabilized": [f.stabilized for f in fits],
        },
    )
