from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import random_micro
from ecoinfer.errors import DataValidationError, MissingCovariateError
from ecoinfer.models.aggregate_table import AggregateTable
from ecoinfer.models.micro_data import MicroData
from ecoinfer.services.aggregation import aggregate, aggregation_residual, identity_residual, to_micro


def test_accounting_identity_on_random_micro_data():
    rng = np.random.default_rng(7)
    worst_identity = 0.0
    worst_aggregation = 0.0
    for _ in range(1000):
        micro = random_micro(rng, G=int(rng.integers(1, 6)), K=int(rng.integers(2, 5)), J=int(rng.integers(1, 4)))
        table, truth = aggregate(micro)
        worst_identity = max(worst_identity, identity_residual(table, truth))
        worst_aggregation = max(worst_aggregation, aggregation_residual(table, truth))
    assert worst_identity <= 1e-12
    assert worst_aggregation <= 1e-12


def test_empty_cell_is_undefined_not_zero():
    micro = MicroData(
        geo=np.array(["g1", "g1", "g2"], dtype=object),
        category=np.array([0, 0, 1]),
        outcome=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]),
        categories=["a", "b"],
        outcomes=["yes", "no"],
    )
    table, truth = aggregate(micro)
    assert np.all(np.isnan(truth.local_means[0, :, 1]))
    assert_array_equal(truth.defined, [[True, False], [False, True]])
    assert_allclose(table.shares, [[1.0, 0.0], [0.0, 1.0]])
    assert_allclose(truth.local_means[0, :, 0], [0.5, 0.5])
    assert identity_residual(table, truth) == 0.0


def test_global_truth_is_count_weighted():
    micro = MicroData(
        geo=np.array(["g1"] * 4 + ["g2"] * 2, dtype=object),
        category=np.array([0, 0, 0, 1, 0, 1]),
        outcome=np.array([1.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
        categories=["a", "b"],
        outcomes=["y"],
        categorical=False,
    )
    table, truth = aggregate(micro)
    assert_allclose(truth.global_means, [[2.0 / 4.0, 1.0 / 2.0]])
    assert table.counts is None
    assert_allclose(table.means[:, 0], [0.5, 0.5])


def test_category_index_out_of_range_names_row():
    micro = MicroData(
        geo=np.array(["g1", "g1"], dtype=object),
        category=np.array([0, 2]),
        outcome=np.array([[1.0], [0.0]]),
        categories=["a", "b"],
        outcomes=["y"],
        categorical=False,
    )
    with pytest.raises(DataValidationError, match="Row 1"):
        aggregate(micro)


def test_shares_must_sum_to_one(small_table):
    bad = AggregateTable(
        geo=small_table.geo,
        categories=small_table.categories,
        outcomes=small_table.outcomes,
        shares=small_table.shares * np.array([[1.0], [1.1], [1.0]]),
        population=small_table.population,
        means=small_table.means,
    )
    with pytest.raises(DataValidationError, match="south"):
        bad.validate()


def test_ingested_tolerance_accepts_rounding(small_table):
    shares = small_table.shares + np.array([[5e-7, 0.0], [0.0, 0.0], [0.0, 0.0]])
    table = AggregateTable(
        geo=small_table.geo,
        categories=small_table.categories,
        outcomes=small_table.outcomes,
        shares=shares,
        population=small_table.population,
        means=small_table.means,
    )
    table.validate()


def test_complemented_and_collapsed_views(small_table):
    both = small_table.complemented()
    assert both.outcomes == ["yes", "not_yes"]
    assert_allclose(both.means.sum(axis=1), 1.0)

    three = AggregateTable(
        geo=["g1", "g2"],
        categories=["a", "b", "c"],
        outcomes=["y"],
        shares=np.array([[0.2, 0.3, 0.5], [0.6, 0.2, 0.2]]),
        population=np.array([10.0, 20.0]),
        means=np.array([0.4, 0.5]),
    )
    view = three.collapse_binary(0, 1)
    assert view.categories == ["b", "not_b"]
    assert_allclose(view.shares, [[0.3, 0.7], [0.2, 0.8]])


def test_merge_outcomes_adds_columns():
    table = AggregateTable(
        geo=["g1"],
        categories=["a", "b"],
        outcomes=["x", "y", "z"],
        shares=np.array([[0.5, 0.5]]),
        population=np.array([10.0]),
        counts=np.array([[2.0, 3.0, 5.0]]),
    )
    merged = table.merge_outcomes(["y", "z"], "other")
    assert merged.outcomes == ["x", "other"]
    assert_allclose(merged.counts, [[2.0, 8.0]])


def test_missing_covariate(small_table):
    with pytest.raises(MissingCovariateError, match="z1"):
        small_table.covariate("z1")


def test_to_micro_roundtrip_reproduces_truth():
    rng = np.random.default_rng(3)
    micro = random_micro(rng, G=5, K=3, J=2)
    table, truth = aggregate(micro)
    again, truth_again = aggregate(to_micro(table, truth))
    assert_allclose(again.shares, table.shares)
    assert_allclose(truth_again.global_means, truth.global_means)
