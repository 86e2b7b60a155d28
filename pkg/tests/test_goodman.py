from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import norm

from conftest import linear_table
from ecoinfer.errors import CollinearityError, MissingCovariateError
from ecoinfer.models.aggregate_table import AggregateTable
from ecoinfer.models.scenario_spec import ScenarioSpec
from ecoinfer.services.diagnostics import diagnostics
from ecoinfer.services.goodman import extended_goodman_fit, fit_linear, goodman_fit, plugin_estimate
from ecoinfer.services.scenarios import generate


def test_recovers_constant_rates_exactly(rng):
    table = linear_table(rng, beta=(0.7, 0.3))
    est = goodman_fit(table)
    assert_allclose(est.beta_hat, [[0.7, 0.3]], atol=1e-10)
    assert est.method == "goodman"
    assert est.rows()[0].keys() >= {"predictor", "outcome", "estimate", "se"}


def test_interval_is_normal_95_percent_around_the_estimate():
    est = goodman_fit(generate(ScenarioSpec(scenario="A", G=60, seed=3))[0])
    half = norm.ppf(0.975) * est.se
    assert_allclose(est.upper - est.beta_hat, half, rtol=1e-12)
    assert_allclose(est.beta_hat - est.lower, half, rtol=1e-12)


def test_weighted_fit_also_exact(rng):
    table = linear_table(rng, beta=(0.6, 0.1))
    est = goodman_fit(table, weighted=True)
    assert_allclose(est.beta_hat, [[0.6, 0.1]], atol=1e-10)


def test_out_of_range_estimate_is_flagged_not_clipped():
    table = AggregateTable(
        geo=["g1", "g2", "g3", "g4"],
        categories=["a", "b"],
        outcomes=["y"],
        shares=np.array([[0.2, 0.8], [0.4, 0.6], [0.6, 0.4], [0.8, 0.2]]),
        population=np.full(4, 10.0),
        means=np.array([0.0, 0.3, 0.6, 0.9]),
    )
    est = goodman_fit(table)
    assert est.beta_hat[0, 0] > 1.0
    assert not est.feasible[0, 0]


def test_zero_covariate_collapses_to_goodman(rng):
    table = linear_table(rng, covariates=np.zeros((50, 1)), noise=0.01)
    plain = goodman_fit(table)
    extended = extended_goodman_fit(table, ["z1"])
    assert_allclose(extended.beta_hat, plain.beta_hat, atol=1e-10)
    assert extended.metadata["covariates"] == []


def test_collinear_covariates_are_named(rng):
    z = rng.uniform(size=50)
    table = linear_table(rng, covariates=np.column_stack([z, 2.0 * z]), noise=0.01)
    with pytest.raises(CollinearityError) as info:
        extended_goodman_fit(table, ["z1", "z2"])
    assert any("z" in c for c in info.value.columns)


def test_unknown_covariate(rng):
    table = linear_table(rng)
    with pytest.raises(MissingCovariateError):
        extended_goodman_fit(table, ["income"])


def test_plugin_under_linear_contextual_effect(rng):
    G = 400
    z = rng.uniform(size=G)
    x1 = np.clip(0.2 + 0.6 * z + 0.1 * rng.standard_normal(G), 0.02, 0.98)
    shares = np.column_stack([x1, 1.0 - x1])
    f = np.column_stack([0.8 - 0.2 * z, 0.5 - 0.4 * z])
    table = AggregateTable(
        geo=[f"g{g}" for g in range(G)], categories=["a", "b"], outcomes=["y"], shares=shares,
        population=np.full(G, 100.0), means=np.einsum("gk,gk->g", shares, f),
        covariates=z[:, None], covariate_names=["z1"],
    )
    n_gk = table.category_population
    truth = (n_gk * f).sum(axis=0) / n_gk.sum(axis=0)
    est = extended_goodman_fit(table, ["z1"])
    assert_allclose(est.beta_hat[0], truth, atol=1e-10)
    assert_allclose(est.local_estimates[:, 0, :], f, atol=1e-10)

    fit = fit_linear(table, ["z1"])
    at_zero, _ = plugin_estimate(fit, table, 0, {"z1": 0.0})
    assert_allclose(at_zero, [0.8], atol=1e-10)


def test_influence_point_scenario():
    fits, cooks, adjusted = [], [], []
    for seed in range(10):
        table, truth = generate(ScenarioSpec(scenario="B", seed=seed))
        fits.append(goodman_fit(table).beta_hat[0, 0])
        diag = diagnostics(fit_linear(table), table)
        cooks.append(diag.cooks_distance[0, -1])
        assert np.argmax(diag.cooks_distance[0]) == table.G - 1
        adjusted.append(extended_goodman_fit(table, ["z1"], at_covariates={"z1": 0.0}).beta_hat[0, 0])
        assert 0.5 < truth.global_means[0, 0] < 0.56
    assert np.median(fits) >= 0.9
    assert np.median(cooks) > 30
    assert abs(np.mean(adjusted) - 0.51) <= 0.05


def test_leverage_one_gives_infinite_cooks_distance():
    table = AggregateTable(
        geo=["g1", "g2", "g3"],
        categories=["a", "b"],
        outcomes=["y"],
        shares=np.array([[0.2, 0.8], [0.2, 0.8], [0.9, 0.1]]),
        population=np.full(3, 10.0),
        means=np.array([0.3, 0.4, 0.8]),
    )
    diag = diagnostics(fit_linear(table), table)
    assert diag.infinite_flag.tolist() == [False, False, True]
    assert np.isinf(diag.cooks_distance[0, 2])
    assert np.isnan(diag.studentized_residual[0, 2])
    assert_allclose(diag.extrapolation_gap, [0.1, 0.2])


def test_scenario_a_goodman_is_unbiased_on_average():
    estimates = [goodman_fit(generate(ScenarioSpec(scenario="A", seed=s))[0]).beta_hat[0, 0] for s in range(100)]
    assert abs(np.mean(estimates) - 0.5) <= 0.05


def _duplicated(table: AggregateTable) -> AggregateTable:
    return AggregateTable(
        geo=[f"{g}-{copy}" for copy in ("a", "b") for g in table.geo],
        categories=table.categories,
        outcomes=table.outcomes,
        shares=np.vstack([table.shares, table.shares]),
        population=np.concatenate([table.population, table.population]),
        means=np.vstack([table.means, table.means]),
    )


def test_leverage_sums_to_column_count_and_halves_on_duplication(rng):
    table = linear_table(rng, G=40, noise=0.02)
    fit = fit_linear(table)
    diag = diagnostics(fit, table)
    assert diag.leverage.sum() == pytest.approx(fit.coefficients.shape[1])
    doubled = diagnostics(fit_linear(_duplicated(table)), _duplicated(table))
    assert_allclose(doubled.leverage[:40], diag.leverage / 2.0, rtol=1e-10)
    assert_allclose(doubled.leverage[40:], diag.leverage / 2.0, rtol=1e-10)


def test_scaling_the_outcome_scales_the_estimates(rng):
    table = linear_table(rng, noise=0.02)
    scaled = AggregateTable(
        geo=table.geo, categories=table.categories, outcomes=table.outcomes, shares=table.shares,
        population=table.population, means=0.4 * table.means,
    )
    base = goodman_fit(table)
    est = goodman_fit(scaled)
    assert_allclose(est.beta_hat, 0.4 * base.beta_hat, atol=1e-12)
    assert_allclose(est.se, 0.4 * base.se, rtol=1e-10)


def test_cooks_distance_ignores_affine_recoding_of_covariates(rng):
    z = rng.uniform(size=(60, 1))
    table = linear_table(rng, G=60, covariates=z, noise=0.02)
    recoded = AggregateTable(
        geo=table.geo, categories=table.categories, outcomes=table.outcomes, shares=table.shares,
        population=table.population, means=table.means,
        covariates=3.0 * z - 2.0, covariate_names=["z1"],
    )
    first = diagnostics(fit_linear(table, ["z1"]), table)
    second = diagnostics(fit_linear(recoded, ["z1"]), recoded)
    assert_allclose(second.cooks_distance, first.cooks_distance, rtol=1e-8)
    assert_allclose(second.leverage, first.leverage, rtol=1e-8)
