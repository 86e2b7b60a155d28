from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from ..errors import DataValidationError
from ..models.aggregate_table import MICRO_TOLERANCE, AggregateTable
from ..models.ground_truth import GroundTruth
from ..models.scenario_spec import ScenarioSpec

logger = logging.getLogger(__name__)

CATEGORIES = ["k1", "k2"]
OUTCOME = "y1"
COVARIATE = "z1"
MAX_REDRAWS = 1000


def _geo_ids(G: int) -> list[str]:
    return [f"g{g:04d}" for g in range(G)]


def _truncated_normal(rng: np.random.Generator, mean: np.ndarray, cov: np.ndarray, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Rows of a (multivariate) normal redrawn until they fall inside [lo, hi]."""
    mean = np.atleast_2d(mean)
    out = np.empty_like(mean, dtype=float)
    todo = np.arange(mean.shape[0])
    for _ in range(MAX_REDRAWS):
        draws = mean[todo] + rng.multivariate_normal(np.zeros(mean.shape[1]), cov, size=todo.size)
        ok = np.all((draws >= lo) & (draws <= hi), axis=1)
        out[todo[ok]] = draws[ok]
        todo = todo[~ok]
        if todo.size == 0:
            return out
    raise DataValidationError("Scenario places almost no mass inside the unit interval; check its constants.")


def _truncated_normal_1d(rng: np.random.Generator, mean: float | np.ndarray, sd: float, size: int, lo: float, hi: float) -> np.ndarray:
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (size,))
    return _truncated_normal(rng, mean[:, None], np.array([[sd * sd]]), lo, hi)[:, 0]


def _check(spec: ScenarioSpec) -> None:
    if spec.n_geographies < 1:
        raise DataValidationError("Scenario needs at least one geography.")
    if spec.scenario != "R" and spec.K != 2:
        raise DataValidationError(f"Scenario {spec.scenario} is defined for 2 categories, got K={spec.K}.")
    beta = np.asarray(spec.beta, dtype=float)
    if spec.scenario in ("A", "B") and (beta.shape != (2,) or np.any(beta < 0) or np.any(beta > 1)):
        raise DataValidationError(f"Scenario β must be two values in [0, 1], got {spec.beta}.")
    if not 0.0 < spec.share_mean < 1.0:
        raise DataValidationError(f"Share mean must lie in (0, 1), got {spec.share_mean}.")
    if spec.local_sd <= 0 or spec.share_sd <= 0 or spec.noise_scale < 0:
        raise DataValidationError("Scenario dispersions must be positive.")


def _build(
    spec: ScenarioSpec,
    shares: np.ndarray,
    local: np.ndarray,
    population: np.ndarray,
    rng: np.random.Generator,
    covariates: np.ndarray | None = None,
    categories: list[str] | None = None,
) -> tuple[AggregateTable, GroundTruth]:
    """Table and truth from shares (G x K) and local means (G x K) of a bounded scalar outcome."""
    categories = categories or CATEGORIES
    G = shares.shape[0]
    geo = _geo_ids(G)
    if spec.outcome_counts:
        population = np.round(population).astype(np.int64)
        cat_counts = np.floor(shares * population[:, None]).astype(np.int64)
        cat_counts[:, -1] = population - cat_counts[:, :-1].sum(axis=1)
        cells = rng.binomial(cat_counts, local)
        shares = cat_counts / population[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            local = np.where(cat_counts > 0, cells / np.maximum(cat_counts, 1), np.nan)
        counts = cells.sum(axis=1).astype(float)
        table = AggregateTable(
            geo=geo, categories=categories, outcomes=[OUTCOME], shares=shares,
            population=population.astype(float), means=counts / population, counts=counts,
            category_counts=cat_counts.astype(float), covariates=covariates,
            covariate_names=[COVARIATE] if covariates is not None else [], tolerance=MICRO_TOLERANCE,
        )
        totals = cat_counts.sum(axis=0).astype(float)
        global_means = (cells.sum(axis=0) / totals)[None, :]
    else:
        means = np.einsum("gk,gk->g", shares, local)
        table = AggregateTable(
            geo=geo, categories=categories, outcomes=[OUTCOME], shares=shares,
            population=population.astype(float), means=means,
            covariates=covariates,
            covariate_names=[COVARIATE] if covariates is not None else [], tolerance=MICRO_TOLERANCE,
        )
        n_gk = table.category_population
        totals = n_gk.sum(axis=0)
        global_means = (np.einsum("gk,gk->k", n_gk, local) / totals)[None, :]
    truth = GroundTruth(
        global_means=global_means,
        local_means=local[:, None, :],
        category_totals=totals,
        geo=geo,
        categories=categories,
        outcomes=[OUTCOME],
    )
    table.validate()
    return table, truth


def _ccar(spec: ScenarioSpec, rng: np.random.Generator, G: int) -> tuple[np.ndarray, np.ndarray]:
    """Shares around `share_mean` and locals tightly around β, independent of everything else."""
    x1 = _truncated_normal_1d(rng, spec.share_mean, spec.share_sd, G, 1e-6, 1.0 - 1e-6)
    sd = spec.local_sd
    cov = np.array([[sd * sd, spec.local_corr * sd * sd], [spec.local_corr * sd * sd, sd * sd]])
    local = _truncated_normal(rng, np.tile(np.asarray(spec.beta, dtype=float), (G, 1)), cov)
    return np.column_stack([x1, 1.0 - x1]), local


def scenario_a(spec: ScenarioSpec, rng: np.random.Generator) -> tuple[AggregateTable, GroundTruth]:
    G = spec.n_geographies
    shares, local = _ccar(spec, rng, G)
    return _build(spec, shares, local, np.full(G, float(spec.population)), rng)


def scenario_b(spec: ScenarioSpec, rng: np.random.Generator) -> tuple[AggregateTable, GroundTruth]:
    """A plus one geography with x̄1 = 0.9 and B = (1, 0); z is 1 there and near 0 elsewhere."""
    G = spec.n_geographies
    shares, local = _ccar(spec, rng, G)
    z = rng.normal(0.0, spec.outlier_z_sd, G)
    shares = np.vstack([shares, [spec.outlier_share, 1.0 - spec.outlier_share]])
    local = np.vstack([local, [1.0, 0.0]])
    z = np.append(z, 1.0)
    population = np.append(np.full(G, float(spec.population)), float(spec.outlier_population))
    return _build(spec, shares, local, population, rng, covariates=z[:, None])


def confounded_curves(z: np.ndarray, shape: str = "logistic") -> np.ndarray:
    """f_k(z) for both categories (G x 2)."""
    f1 = 0.8 - 0.1 * z
    if shape == "logistic":
        f2 = 0.15 + 0.45 / (1.0 + np.exp((z - 0.4) / 0.1))
    elif shape == "linear":
        f2 = 0.6 - 0.45 * z
    else:
        raise DataValidationError(f"Unknown confounder shape '{shape}'.")
    return np.column_stack([f1, f2])


def scenario_c(spec: ScenarioSpec, rng: np.random.Generator, withhold: bool = False) -> tuple[AggregateTable, GroundTruth]:
    """Locals vary with an observed z that also drives the shares."""
    G = spec.n_geographies
    z = rng.uniform(0.0, 1.0, G)
    x1 = np.clip(0.15 + 0.6 * (1.0 - z) + rng.normal(0.0, 0.12, G), 0.01, 0.99)
    population = rng.integers(500, 1501, G).astype(float)
    curves = confounded_curves(z, spec.confounder_shape)
    if spec.noise_scale > 0:
        local = np.column_stack([
            _truncated_normal_1d(rng, curves[:, k], spec.noise_scale, G, 0.0, 1.0) for k in range(2)
        ])
    else:
        local = curves
    table, truth = _build(spec, np.column_stack([x1, 1.0 - x1]), local, population, rng, covariates=z[:, None])
    return (table.without_covariates() if withhold else table), truth


def scenario_e(spec: ScenarioSpec, rng: np.random.Generator) -> tuple[AggregateTable, GroundTruth]:
    """
    Uniform overperformance plus a contextual effect in the first category,
    almost no support in the second: the linear plug-in for the second goes negative.
    """
    G = spec.n_geographies
    x1 = rng.uniform(0.2, 0.8, G)
    b1 = np.clip(0.75 + 0.2 * x1 + rng.normal(0.0, 0.005, G), 0.0, 1.0)
    b2 = np.full(G, 0.01)
    population = np.full(G, float(spec.population))
    return _build(spec, np.column_stack([x1, 1.0 - x1]), np.column_stack([b1, b2]), population, rng,
                  covariates=x1[:, None])


def default_alpha(J: int, K: int) -> np.ndarray:
    """Concentration with each category leaning to its own outcome."""
    alpha = np.ones((J, K))
    for k in range(K):
        alpha[k % J, k] = 4.0
    return alpha


def scenario_r(spec: ScenarioSpec, rng: np.random.Generator) -> tuple[AggregateTable, GroundTruth]:
    """
    Counts drawn from the multinomial–Dirichlet model: β_g·k ~ Dirichlet(α_·k),
    M_g ~ Multinomial(N_g, β_g x̄_g). Truth is the N_gk-weighted average of the β_g.
    """
    G, J, K = spec.n_geographies, max(spec.J, 2), spec.K
    alpha = (np.asarray(spec.dirichlet_alpha, dtype=float).reshape(J, K)
             if spec.dirichlet_alpha else default_alpha(J, K))
    if np.any(alpha <= 0):
        raise DataValidationError("Dirichlet concentrations must be positive.")
    shares = rng.dirichlet(np.full(K, 2.0), size=G)
    population = np.full(G, spec.population, dtype=np.int64)
    gammas = rng.standard_gamma(np.broadcast_to(alpha, (G, J, K)))
    rates = gammas / gammas.sum(axis=1, keepdims=True)              # G x J x K, columns on the simplex
    probs = np.einsum("gjk,gk->gj", rates, shares)
    counts = rng.multinomial(population, probs / probs.sum(axis=1, keepdims=True))
    categories = [f"k{k + 1}" for k in range(K)]
    outcomes = [f"y{j + 1}" for j in range(J)]
    geo = _geo_ids(G)
    table = AggregateTable(
        geo=geo, categories=categories, outcomes=outcomes, shares=shares,
        population=population.astype(float), means=counts / population[:, None],
        counts=counts.astype(float), tolerance=MICRO_TOLERANCE,
    )
    n_gk = table.category_population
    totals = n_gk.sum(axis=0)
    truth = GroundTruth(
        global_means=np.einsum("gk,gjk->jk", n_gk, rates) / totals,
        local_means=rates,
        category_totals=totals,
        geo=geo,
        categories=categories,
        outcomes=outcomes,
    )
    table.validate()
    return table, truth


def generate(spec: ScenarioSpec) -> tuple[AggregateTable, GroundTruth]:
    """Data and its known truth; identical spec and seed give identical output."""
    _check(spec)
    rng = np.random.default_rng(spec.seed)
    builders = {
        "A": scenario_a,
        "B": scenario_b,
        "C": scenario_c,
        "D": lambda s, r: scenario_c(s, r, withhold=True),
        "E": scenario_e,
        "R": scenario_r,
    }
    if spec.scenario not in builders:
        raise DataValidationError(f"Unknown scenario '{spec.scenario}'.")
    table, truth = builders[spec.scenario](spec, rng)
    logger.debug("[Scenario] %s seed=%d: G=%d, truth %s", spec.scenario, spec.seed, table.G,
                 np.array2string(truth.global_means, precision=4))
    return table, truth


def with_seed(spec: ScenarioSpec, seed: int) -> ScenarioSpec:
    return replace(spec, seed=seed)
