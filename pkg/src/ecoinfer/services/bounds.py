from __future__ import annotations

import itertools
import logging
from typing import Literal

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ..errors import DataValidationError, EstimationError
from ..models.aggregate_table import AggregateTable
from ..models.bounds_set import BoundsSet

logger = logging.getLogger(__name__)

VERTEX_TOLERANCE = 1e-12


def closed_form_bounds(shares: np.ndarray, y: np.ndarray, lo: float = 0.0, hi: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-cell interval for B_gk given Σ_k x̄_gk B_gk = ȳ_g and B ∈ [lo, hi]^K.
    shares G x K, y G; returns (lower, upper) G x K. Cells with x̄_gk = 0 get [lo, hi].
    """
    x = shares
    rest = 1.0 - x
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = np.where(x > 0, (y[:, None] - rest * hi) / x, lo)
        upper = np.where(x > 0, (y[:, None] - rest * lo) / x, hi)
    return np.clip(lower, lo, hi), np.clip(upper, lo, hi)


def vertex_bounds(shares: np.ndarray, y: np.ndarray, lo: float = 0.0, hi: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """
    Same intervals by enumerating the vertices of {B ∈ [lo, hi]^K : x̄ᵀB = ȳ}:
    every vertex has all coordinates but one at a bound, the free one solved
    from the identity. Vectorized over geographies.
    """
    G, K = shares.shape
    lower = np.full((G, K), np.inf)
    upper = np.full((G, K), -np.inf)
    for free in range(K):
        others = [k for k in range(K) if k != free]
        for corner in itertools.product((lo, hi), repeat=K - 1):
            corner = np.asarray(corner)
            fixed = shares[:, others] @ corner
            x_free = shares[:, free]
            with np.errstate(divide="ignore", invalid="ignore"):
                value = np.where(x_free > 0, (y - fixed) / x_free, np.nan)
            ok = (value >= lo - VERTEX_TOLERANCE) & (value <= hi + VERTEX_TOLERANCE)
            value = np.clip(value, lo, hi)
            vertex = np.empty((G, K))
            vertex[:, others] = corner
            vertex[:, free] = value
            lower = np.where(ok[:, None], np.minimum(lower, vertex), lower)
            upper = np.where(ok[:, None], np.maximum(upper, vertex), upper)
    empty = np.flatnonzero(~np.isfinite(lower[:, 0]))
    if empty.size:
        raise DataValidationError(f"Row {int(empty[0])}: no value in [{lo:g}, {hi:g}] satisfies the identity.")
    return lower, upper


def local_bounds(table: AggregateTable, outcome_range: tuple[float, float] = (0.0, 1.0)) -> BoundsSet:
    lo, hi = outcome_range
    if not lo < hi:
        raise DataValidationError(f"Outcome range must satisfy lo < hi, got {outcome_range}.")
    y_all = table.outcome_means
    tol = table.tolerance
    outside = np.flatnonzero(np.any((y_all < lo - tol) | (y_all > hi + tol), axis=1))
    if outside.size:
        raise DataValidationError(f"Geography '{table.geo[outside[0]]}': outcome outside [{lo:g}, {hi:g}].")
    y_all = np.clip(y_all, lo, hi)

    G, J, K = table.G, table.J, table.K
    lower = np.empty((G, J, K))
    upper = np.empty((G, J, K))
    # ingested shares carry rounding; the identity needs them to sum to exactly 1
    shares = table.shares / table.shares.sum(axis=1, keepdims=True)
    method = closed_form_bounds if K == 2 else vertex_bounds
    for j in range(J):
        lower[:, j, :], upper[:, j, :] = method(shares, y_all[:, j], lo, hi)

    vacuous = table.shares <= 0
    if vacuous.any():
        logger.warning("[Bounds] %d cell(s) with zero share are vacuous", int(vacuous.sum()))
    return BoundsSet(
        lower=lower,
        upper=upper,
        vacuous=vacuous,
        geo=table.geo,
        categories=table.categories,
        outcomes=table.outcomes,
        outcome_range=(lo, hi),
    )


def _stacked_lp(shares: np.ndarray, y: np.ndarray, weights: np.ndarray, k: int, lo: float, hi: float) -> tuple[float, float]:
    """min and max of Σ_g w_g B_gk over all local matrices consistent with every identity at once."""
    G, K = shares.shape
    n = G * K
    rows = np.repeat(np.arange(G), K)
    A_eq = sparse.csr_matrix((shares.ravel(), (rows, np.arange(n))), shape=(G, n))
    c = np.zeros(n)
    c[k::K] = weights
    out = []
    for sign in (1.0, -1.0):
        res = linprog(sign * c, A_eq=A_eq, b_eq=y, bounds=(lo, hi), method="highs")
        if res.status != 0:
            raise EstimationError(f"Stacked bounds LP failed for category {k}: {res.message}")
        out.append(sign * res.fun)
    return out[0], out[1]


def global_bounds(
    table: AggregateTable,
    local: BoundsSet | None = None,
    method: Literal["weighted", "stacked"] = "weighted",
) -> BoundsSet:
    """
    Interval for each global B_k. `weighted` averages local endpoints with N_gk
    weights; `stacked` solves the joint LP over all local cells.
    """
    local = local or local_bounds(table)
    n_gk = table.category_population
    totals = n_gk.sum(axis=0)
    empty = [table.categories[k] for k in np.flatnonzero(totals <= 0)]
    if empty:
        raise EstimationError(f"No population in category(ies): {', '.join(empty)}.")
    w = n_gk / totals

    if method == "weighted":
        g_lower = np.einsum("gk,gjk->jk", w, local.lower)
        g_upper = np.einsum("gk,gjk->jk", w, local.upper)
    elif method == "stacked":
        lo, hi = local.outcome_range
        y_all = np.clip(table.outcome_means, lo, hi)
        g_lower = np.empty((table.J, table.K))
        g_upper = np.empty((table.J, table.K))
        for j in range(table.J):
            for k in range(table.K):
                g_lower[j, k], g_upper[j, k] = _stacked_lp(table.shares, y_all[:, j], w[:, k], k, lo, hi)
    else:
        raise ValueError(f"Unknown global bounds method '{method}'.")

    local.global_lower = g_lower
    local.global_upper = g_upper
    logger.info("[Bounds] global intervals (%s) for %d cells", method, g_lower.size)
    return local
