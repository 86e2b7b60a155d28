from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ecoinfer.errors import DataValidationError, EstimationError
from ecoinfer.models.aggregate_table import AggregateTable
from ecoinfer.models.scenario_spec import ScenarioSpec
from ecoinfer.services.evaluation import monte_carlo
from ecoinfer.services.rosen import (
    chain_diagnostics,
    dirichlet_covariance,
    rosen_estimates,
    rosen_gibbs,
    sample_dirichlet,
    starting_rates,
)
from ecoinfer.services.scenarios import generate


def _count_table(rng: np.random.Generator, G: int = 40, K: int = 2, J: int = 2, empty: int | None = None) -> AggregateTable:
    """Integer category and outcome counts from a known set of rates."""
    rates = rng.dirichlet(np.full(J, 3.0), size=K).T                   # J x K
    cat_counts = rng.multinomial(200, rng.dirichlet(np.full(K, 2.0)), size=G)
    if empty is not None:
        cat_counts[:, empty] = 0
    counts = np.zeros((G, J), dtype=np.int64)
    for k in range(K):
        counts += rng.multinomial(cat_counts[:, k], rates[:, k])
    population = cat_counts.sum(axis=1)
    return AggregateTable(
        geo=[f"g{g}" for g in range(G)],
        categories=[f"c{k}" for k in range(K)],
        outcomes=[f"o{j}" for j in range(J)],
        shares=cat_counts / population[:, None],
        population=population.astype(float),
        counts=counts.astype(float),
        category_counts=cat_counts.astype(float),
    )


def test_dirichlet_draws_lie_on_simplex(rng):
    draws = sample_dirichlet(rng, np.full((500, 4), 0.3))
    assert np.all(draws >= 0)
    assert_allclose(draws.sum(axis=1), 1.0)


def test_dirichlet_covariance_matches_sampling(rng):
    alpha = np.array([2.0, 3.0, 5.0])
    draws = sample_dirichlet(rng, np.broadcast_to(alpha, (200_000, 3)))
    assert_allclose(np.cov(draws.T), dirichlet_covariance(alpha), atol=3e-4)


def test_rhat_near_one_for_independent_chains(rng):
    rhat, ess = chain_diagnostics(rng.standard_normal((4, 1000, 2, 3)))
    assert rhat.shape == ess.shape == (2, 3)
    assert np.all(np.abs(rhat - 1.0) < 0.02)
    assert np.all(ess > 2000)


def test_rhat_flags_separated_chains(rng):
    draws = rng.standard_normal((2, 500, 1, 1))
    draws[1] += 5.0
    rhat, ess = chain_diagnostics(draws)
    assert rhat[0, 0] > 1.5
    assert ess[0, 0] < 100


def test_frozen_cells_count_as_converged():
    draws = np.full((2, 50, 1, 2), 0.3)
    draws[:, :, 0, 1] = np.linspace(0.0, 1.0, 100).reshape(2, 50)
    rhat, ess = chain_diagnostics(draws)
    assert rhat[0, 0] == 1.0 and ess[0, 0] == 100.0


def test_starting_rates_are_distributions(rng):
    table = _count_table(rng, G=400, K=3, J=3)
    start = starting_rates(np.round(table.counts), table.shares)
    assert start.shape == (3, 3)
    assert_allclose(start.sum(axis=0), 1.0)
    assert np.all(start >= 0.0)


def test_every_chain_is_diagnosed(rng):
    table = _count_table(rng)
    post = rosen_gibbs(table, iters=300, burnin=100, seed=4, chains=3)
    assert len(post.metadata["final_states"]) == 3
    assert post.rhat.shape == post.metadata["ess"].shape == (2, 2)
    idata = post.metadata["inference_data"]
    assert idata.posterior["beta"].shape == (3, 200, 2, 2)
    assert list(idata.posterior["category"].values) == ["c0", "c1"]
    assert idata.sample_stats["acceptance"].shape == (3, 2, 2)


def test_small_rxc_posterior():
    table, truth = generate(ScenarioSpec(scenario="R", G=50, J=3, K=2, seed=6))
    post = rosen_gibbs(table, iters=600, burnin=200, seed=6, chains=2)
    assert post.draws.shape == (2, 400, 3, 2)
    assert np.all((post.mean >= 0) & (post.mean <= 1))
    assert_allclose(post.mean.sum(axis=0), 1.0, atol=1e-10)
    assert np.all(np.abs(post.mean - truth.global_means) < 0.2)
    assert np.all((post.acceptance > 0) & (post.acceptance < 1))
    lo, hi = post.interval()
    assert np.all(lo <= hi)


def test_estimate_set_carries_quantiles(rng):
    est = rosen_estimates(_count_table(rng), iters=300, burnin=100, seed=1)
    assert est.method == "rosen"
    assert set(est.metadata["quantiles"]) == {"q2.5", "q25", "q50", "q75", "q97.5"}
    assert np.all(est.lower <= est.beta_hat) and np.all(est.beta_hat <= est.upper)
    assert est.local_estimates.shape == (40, 2, 2)


def test_row_orientation_is_close_to_a_distribution(rng):
    table = _count_table(rng, G=60)
    post = rosen_gibbs(table, iters=500, burnin=200, seed=3, orientation="row")
    assert post.orientation == "row"
    assert_allclose(post.mean.sum(axis=0), 1.0, atol=0.1)


def test_empty_category_is_reported_from_prior(rng, caplog):
    table = _count_table(rng, K=3, empty=2)
    with caplog.at_level("WARNING"):
        post = rosen_gibbs(table, iters=300, burnin=100, seed=2)
    assert_array_equal(post.prior_only, [False, False, True])
    assert np.all((post.mean[:, 2] >= 0) & (post.mean[:, 2] <= 1))
    assert "no population" in caplog.text


def test_same_seed_same_draws(rng):
    table = _count_table(rng)
    a = rosen_gibbs(table, iters=200, burnin=50, seed=11, chains=2)
    b = rosen_gibbs(table, iters=200, burnin=50, seed=11, chains=2)
    assert_array_equal(a.draws, b.draws)


def test_chain_started_from_least_squares_lands_on_truth():
    table, truth = generate(ScenarioSpec(scenario="R", G=500, population=1000, seed=31))
    post = rosen_gibbs(table, iters=400, burnin=100, seed=31, chains=1)
    assert np.abs(post.mean - truth.global_means).max() < 0.03


def _fixed_rate_table(rng: np.random.Generator, rates: np.ndarray, shares: np.ndarray, n: int = 200) -> AggregateTable:
    G, K = shares.shape
    cat_counts = np.round(shares * n).astype(np.int64)
    counts = sum(rng.multinomial(cat_counts[:, k], rates[:, k]) for k in range(K))
    return AggregateTable(
        geo=[f"g{g}" for g in range(G)],
        categories=[f"c{k}" for k in range(K)],
        outcomes=[f"o{j}" for j in range(rates.shape[0])],
        shares=cat_counts / n,
        population=np.full(G, float(n)),
        counts=counts.astype(float),
        category_counts=cat_counts.astype(float),
    )


def test_homogeneous_geographies_identify_one_category(rng):
    shares = np.tile([1.0, 0.0], (30, 1))
    table = _fixed_rate_table(rng, np.array([[0.3, 0.5], [0.7, 0.5]]), shares)
    post = rosen_gibbs(table, iters=600, burnin=200, seed=8)
    pooled = table.counts.sum(axis=0) / table.population.sum()
    assert_allclose(post.mean[:, 0], pooled, atol=0.02)
    assert_array_equal(post.prior_only, [False, True])
    assert np.all((post.mean[:, 1] >= 0) & (post.mean[:, 1] <= 1))


def test_single_category_concentrates_at_observed_rate(rng):
    table = _fixed_rate_table(rng, np.array([[0.25], [0.75]]), np.ones((30, 1)))
    post = rosen_gibbs(table, iters=600, burnin=200, seed=9)
    pooled = table.counts.sum(axis=0) / table.population.sum()
    assert_allclose(post.mean[:, 0], pooled, atol=0.02)
    assert post.sd.max() < 0.02


def test_merging_a_small_outcome_reruns_on_fewer_outcomes(rng):
    shares = rng.dirichlet([2.0, 2.0], size=60)
    rates = np.array([[0.6, 0.3], [0.394, 0.694], [0.006, 0.006]])
    table = _fixed_rate_table(rng, rates, shares, n=1000)
    merged_table = table.merge_outcomes(["o1", "o2"], "o12")
    assert merged_table.outcomes == ["o0", "o12"]
    full = rosen_gibbs(table, iters=600, burnin=200, seed=10)
    merged = rosen_gibbs(merged_table, iters=600, burnin=200, seed=10)
    assert merged.mean.shape == (2, 2)
    assert_allclose(merged.mean.sum(axis=0), 1.0, atol=1e-10)
    shift = merged.mean[0] - full.mean[0]
    assert np.all(np.isfinite(shift)) and np.all(np.abs(shift) < 1.0)


def test_needs_counts(small_table):
    with pytest.raises(DataValidationError, match="counts"):
        rosen_gibbs(small_table, iters=10, burnin=5)


def test_counts_must_add_up_to_population(rng):
    table = _count_table(rng, G=5)
    table.population[0] += 3
    table.category_counts[0, 0] += 3
    with pytest.raises(DataValidationError, match="add up"):
        rosen_gibbs(table, iters=10, burnin=5)


def test_burnin_must_leave_draws(rng):
    with pytest.raises(EstimationError, match="burnin"):
        rosen_gibbs(_count_table(rng), iters=100, burnin=100)


@pytest.mark.slow
def test_credible_intervals_cover_generated_truth():
    spec = ScenarioSpec(scenario="R", G=500, population=1000, seed=31)
    report = monte_carlo(spec, {"rosen": lambda t: rosen_estimates(t, iters=3000, burnin=1000)}, 50)
    assert report.summary["coverage"].min() >= 0.9
    assert report.cells["estimate"].between(0.0, 1.0).all()
