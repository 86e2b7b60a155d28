from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate
from scipy.stats import multivariate_normal, norm, truncnorm

from ecoinfer.errors import DataValidationError
from ecoinfer.models.aggregate_table import AggregateTable
from ecoinfer.models.king_results import TruncNormParams
from ecoinfer.models.scenario_spec import ScenarioSpec
from ecoinfer.services.goodman import goodman_fit
from ecoinfer.services.king import (
    is_near_singular,
    king_fit,
    king_local_sample,
    king_mle,
    king_one_vs_rest,
    line_integral,
    log_likelihood,
    square_mass,
    tomography,
    truncated_mean,
    warm_start,
)
from ecoinfer.services.scenarios import generate


def _table(shares: list[list[float]], y: list[float]) -> AggregateTable:
    return AggregateTable(
        geo=[f"g{g}" for g in range(len(y))],
        categories=["a", "b"],
        outcomes=["y"],
        shares=np.array(shares),
        population=np.full(len(y), 100.0),
        means=np.array(y),
    )


def _random_params(rng: np.random.Generator) -> TruncNormParams:
    sd = rng.uniform(0.08, 0.4, 2)
    rho = rng.uniform(-0.6, 0.6)
    cov = np.array([[sd[0] ** 2, rho * sd[0] * sd[1]], [rho * sd[0] * sd[1], sd[1] ** 2]])
    return TruncNormParams(mu=rng.uniform(0.1, 0.9, 2), sigma=cov)


def test_tomography_endpoints_satisfy_identity(small_table):
    for g in range(small_table.G):
        line = tomography(small_table, g)
        x, y = small_table.shares[g], small_table.means[g, 0]
        assert line.start @ x == pytest.approx(y)
        assert line.end @ x == pytest.approx(y)
        assert np.all((line.start >= 0) & (line.start <= 1))


def test_degenerate_line_leaves_free_coordinate_undefined():
    table = _table([[1.0, 0.0], [0.5, 0.5], [0.3, 0.7]], [0.4, 0.5, 0.6])
    line = tomography(table, 0)
    assert line.free_coordinate == 1
    assert line.start[0] == pytest.approx(0.4)
    assert np.isnan(line.start[1])
    draws = king_local_sample(TruncNormParams(mu=[0.5, 0.5], sigma=np.eye(2) * 0.05), line, draws=10)
    assert np.all(np.isnan(draws[:, 1]))


def test_square_mass_and_mean_for_independent_normal():
    mu, sd = np.array([0.3, 0.8]), np.array([0.2, 0.35])
    params = TruncNormParams(mu=mu, sigma=np.diag(sd ** 2))
    expected = np.prod(norm.cdf((1 - mu) / sd) - norm.cdf(-mu / sd))
    assert square_mass(params) == pytest.approx(expected, rel=1e-8)
    a, b = -mu / sd, (1 - mu) / sd
    assert_allclose(truncated_mean(params), truncnorm.mean(a, b, loc=mu, scale=sd), rtol=1e-7)


def test_line_integral_matches_direct_quadrature():
    rng = np.random.default_rng(21)
    for _ in range(20):
        params = _random_params(rng)
        x1 = float(rng.uniform(0.05, 0.95))
        y = float(rng.uniform(0.05, 0.95))
        x2 = 1.0 - x1
        lo = max(0.0, (y - x2) / x1)
        hi = min(1.0, y / x1)
        if hi <= lo:
            continue
        dens = lambda b1: multivariate_normal.pdf([b1, (y - x1 * b1) / x2], params.mu, params.sigma) / x2
        oracle, _ = integrate.quad(dens, lo, hi, epsabs=1e-12, epsrel=1e-10)
        assert line_integral(params, x1, y) == pytest.approx(oracle, rel=1e-6, abs=1e-10)


def _batch_se(values: np.ndarray, batches: int = 40) -> float:
    means = values[: len(values) // batches * batches].reshape(batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(batches))


def test_posterior_draws_live_on_segment_and_match_oracle():
    rng = np.random.default_rng(99)
    checked = 0
    while checked < 50:
        params = _random_params(rng)
        x1 = float(rng.uniform(0.1, 0.9))
        y = float(rng.uniform(0.1, 0.9))
        table = _table([[x1, 1.0 - x1]], [y])
        line = tomography(table, 0)
        if line.length < 1e-3:
            continue
        draws = king_local_sample(params, line, draws=4000, seed=checked)
        assert np.all((draws >= 0.0) & (draws <= 1.0))
        assert_allclose(draws @ np.array([x1, 1.0 - x1]), y, atol=1e-12)

        direction = (line.end - line.start) / line.length
        weight = lambda t: multivariate_normal.pdf(line.start + t * direction, params.mu, params.sigma)
        mass, _ = integrate.quad(weight, 0.0, line.length, epsabs=1e-14)
        first, _ = integrate.quad(lambda t: (line.start[0] + t * direction[0]) * weight(t), 0.0, line.length,
                                  epsabs=1e-14)
        oracle = first / mass
        assert abs(draws[:, 0].mean() - oracle) <= 4.0 * _batch_se(draws[:, 0]) + 1e-6
        checked += 1


def test_needs_two_categories():
    table = AggregateTable(
        geo=["g1"], categories=["a", "b", "c"], outcomes=["y"],
        shares=np.array([[0.2, 0.3, 0.5]]), population=np.array([10.0]), means=np.array([0.5]),
    )
    with pytest.raises(DataValidationError, match="one-vs-rest"):
        tomography(table, 0)


def test_mle_needs_informative_lines():
    table = _table([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]], [0.2, 0.3, 0.4])
    with pytest.raises(DataValidationError, match="non-degenerate"):
        king_mle(table)


def test_mle_rejects_outcomes_outside_the_unit_interval():
    table = _table([[0.2, 0.8], [0.5, 0.5], [0.7, 0.3], [0.9, 0.1]], [0.3, 1.4, 0.5, 0.6])
    with pytest.raises(DataValidationError, match="g1.*outside"):
        king_mle(table)


def test_likelihood_is_symmetric_under_category_swap():
    rng = np.random.default_rng(5)
    for _ in range(10):
        params = _random_params(rng)
        swapped = TruncNormParams(mu=params.mu[::-1], sigma=params.sigma[::-1, ::-1])
        x1 = rng.uniform(0.05, 0.95, 8)
        y = rng.uniform(0.1, 0.9, 8)
        assert log_likelihood(swapped, 1.0 - x1, y) == pytest.approx(log_likelihood(params, x1, y), rel=1e-6, abs=1e-6)


def test_warm_start_lies_inside_the_square():
    table, _ = generate(ScenarioSpec(scenario="A", seed=1))
    start = warm_start(table)
    assert np.all((start.mu >= 0.05) & (start.mu <= 0.95))
    assert np.linalg.eigvalsh(start.sigma)[0] >= 0.02 ** 2 - 1e-15


def test_near_singular_covariance_is_flagged():
    assert is_near_singular(np.diag([2e-8, 0.01]))
    assert is_near_singular(np.array([[0.01, 0.01 - 1e-12], [0.01 - 1e-12, 0.01]]))
    assert not is_near_singular(np.array([[0.01, 0.004], [0.004, 0.02]]))


def test_evaluation_cap_keeps_best_iterate(caplog):
    table, _ = generate(ScenarioSpec(scenario="A", seed=1))
    with caplog.at_level("WARNING"):
        fit = king_mle(table, max_evaluations=30)
    assert not fit.converged
    assert np.isfinite(fit.log_likelihood)
    assert np.all((fit.beta >= 0) & (fit.beta <= 1))
    assert "without converging" in caplog.text


@pytest.mark.slow
def test_king_on_calibrated_ccar_scenario():
    table, truth = generate(ScenarioSpec(scenario="A", seed=1))
    est = king_fit(table, draws=500, seed=1)
    assert abs(est.beta_hat[0, 0] - 0.5) <= 0.05
    assert np.all(est.lower <= est.upper)
    finite = est.metadata["finite_sample"]
    assert finite.shape == (1, 2)
    assert abs(finite[0, 0] - truth.global_means[0, 0]) <= 0.05


@pytest.mark.slow
def test_king_across_seeds_of_ccar_scenario():
    estimates = [king_mle(generate(ScenarioSpec(scenario="A", seed=s))[0]).beta[0] for s in range(5)]
    assert abs(np.median(estimates) - 0.5) <= 0.05


@pytest.mark.slow
def test_king_is_less_drastic_than_goodman_with_influence_point():
    king_errors, goodman_errors = [], []
    for seed in (1, 2, 3):
        table, truth = generate(ScenarioSpec(scenario="B", seed=seed))
        target = truth.global_means[0, 0]
        king_errors.append(abs(king_mle(table).beta[0] - target))
        goodman_errors.append(abs(goodman_fit(table).beta_hat[0, 0] - target))
    assert np.mean(king_errors) < np.mean(goodman_errors)


@pytest.mark.slow
def test_category_swap_swaps_the_fit():
    table, _ = generate(ScenarioSpec(scenario="A", seed=3))
    swapped = AggregateTable(
        geo=table.geo, categories=table.categories[::-1], outcomes=table.outcomes,
        shares=table.shares[:, ::-1], population=table.population, means=table.means,
    )
    fit = king_mle(table)
    mirror = king_mle(swapped)
    assert_allclose(mirror.beta, fit.beta[::-1], atol=0.02)
    assert_allclose(mirror.params.mu, fit.params.mu[::-1], atol=0.05)
    assert mirror.log_likelihood == pytest.approx(fit.log_likelihood, abs=0.05)


@pytest.mark.slow
def test_one_vs_rest_covers_every_cell():
    table, _ = generate(ScenarioSpec(scenario="R", G=30, J=2, K=3, seed=2))
    est = king_one_vs_rest(table, draws=100, seed=2)
    assert est.method == "king-ovr"
    assert est.beta_hat.shape == (2, 3)
    assert np.array(est.metadata["converged"]).shape == (2, 3)
    assert np.all((est.beta_hat >= 0) & (est.beta_hat <= 1))
    assert np.all(est.lower <= est.upper)
