from __future__ import annotations

import logging

import numpy as np

from ..errors import DataValidationError
from ..models.aggregate_table import MICRO_TOLERANCE, AggregateTable
from ..models.ground_truth import GroundTruth
from ..models.micro_data import MicroData

logger = logging.getLogger(__name__)


def aggregate(micro: MicroData) -> tuple[AggregateTable, GroundTruth]:
    """
    Collapse individual records into per-geography aggregates plus the
    conditional means they were built from.

    Shares are ratios of integer counts and local means are direct sums, so the
    accounting identity ȳ_g = Σ_k x̄_gk B_gk holds to rounding. Cells with no
    individuals are NaN in the local truth.
    """
    micro.validate()
    geos = list(micro.geographies)
    index = {g: i for i, g in enumerate(geos)}
    rows = np.array([index[g] for g in micro.geo], dtype=int)
    G, K, J = len(geos), micro.K, micro.J

    cat_counts = np.zeros((G, K))
    np.add.at(cat_counts, (rows, micro.category), 1.0)
    sums = np.zeros((G, J, K))
    np.add.at(sums, (rows, slice(None), micro.category), micro.outcome)

    population = cat_counts.sum(axis=1)
    shares = cat_counts / population[:, None]
    outcome_sums = sums.sum(axis=2)
    means = outcome_sums / population[:, None]

    with np.errstate(invalid="ignore", divide="ignore"):
        local = np.where(cat_counts[:, None, :] > 0, sums / cat_counts[:, None, :], np.nan)
    totals = cat_counts.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        global_means = np.where(totals > 0, sums.sum(axis=0) / totals, np.nan)

    table = AggregateTable(
        geo=[str(g) for g in geos],
        categories=list(micro.categories),
        outcomes=list(micro.outcomes),
        shares=shares,
        population=population,
        means=means,
        counts=outcome_sums if micro.categorical else None,
        category_counts=cat_counts,
        tolerance=MICRO_TOLERANCE,
    )
    truth = GroundTruth(
        global_means=global_means,
        local_means=local,
        category_totals=totals,
        geo=table.geo,
        categories=table.categories,
        outcomes=table.outcomes,
    )
    logger.debug("[Aggregate] %d records -> %d geographies, K=%d, J=%d", len(micro), G, K, J)
    return table, truth


def identity_residual(table: AggregateTable, truth: GroundTruth) -> float:
    """max_g |ȳ_g − Σ_k x̄_gk B_gk| with undefined cells contributing nothing."""
    local = np.where(np.isnan(truth.local_means), 0.0, truth.local_means)
    implied = np.einsum("gk,gjk->gj", table.shares, local)
    return float(np.max(np.abs(table.outcome_means - implied)))


def aggregation_residual(table: AggregateTable, truth: GroundTruth) -> float:
    """max over cells of |B_k − N_gk-weighted average of B_gk|."""
    weighted = truth.weighted_local_average(table.category_population)
    diff = np.abs(truth.global_means - weighted)
    return float(np.nanmax(diff)) if np.any(np.isfinite(diff)) else 0.0


def to_micro(table: AggregateTable, truth: GroundTruth) -> MicroData:
    """
    Expand an integer-count table into individual records consistent with its
    local truth: N_gk people of category k, of whom N_gk·B_gjk have outcome j.
    """
    if table.category_counts is None:
        raise DataValidationError("Category counts are required to expand a table into records.")
    cell = table.category_counts[:, None, :] * np.where(np.isnan(truth.local_means), 0.0, truth.local_means)
    rounded = np.round(cell)
    if not np.allclose(cell, rounded, atol=1e-6):
        raise DataValidationError("Local truth does not imply integer cell counts.")
    rounded = rounded.astype(int)
    category_counts = np.round(table.category_counts).astype(int)
    scalar = table.J == 1
    if scalar:
        # bounded scalar outcome: the rest of each category has y = 0
        rounded = np.concatenate([rounded, category_counts[:, None, :] - rounded], axis=1)
    if not np.array_equal(rounded.sum(axis=1), category_counts):
        raise DataValidationError("Cell counts do not add up to category counts; outcomes must be categorical.")

    geo, category, outcome_index = [], [], []
    for g, name in enumerate(table.geo):
        for j in range(rounded.shape[1]):
            for k in range(table.K):
                n = rounded[g, j, k]
                geo.extend([name] * n)
                category.extend([k] * n)
                outcome_index.extend([j] * n)
    outcome_index = np.asarray(outcome_index, dtype=int)
    outcome = (outcome_index == 0).astype(float) if scalar else np.eye(table.J)[outcome_index]
    return MicroData(
        geo=np.asarray(geo, dtype=object),
        category=np.asarray(category, dtype=int),
        outcome=outcome,
        categories=list(table.categories),
        outcomes=list(table.outcomes),
        categorical=not scalar,
        geographies=list(table.geo),
    )
