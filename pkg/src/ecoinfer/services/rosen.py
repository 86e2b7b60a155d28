from __future__ import annotations

import logging
from typing import Callable, Literal

import arviz as az
import numpy as np
import xarray
from scipy.special import gammaln

from ..errors import DataValidationError, EstimationError
from ..models.aggregate_table import AggregateTable
from ..models.estimate_set import EstimateSet
from ..models.rosen_results import QUANTILES, RosenPosterior, RxcState
from .parallel import derived_seeds, parallel_map

logger = logging.getLogger(__name__)

ALPHA_PRIOR = (4.0, 2.0)        # Gamma(shape, rate) on every α_jk
ADAPT_WINDOW = 50
TARGET_ACCEPTANCE = (0.2, 0.4)
INITIAL_STEP = 0.5
TINY = 1e-300
# Floor on starting rates before renormalizing
START_FLOOR = 0.02
# Dirichlet concentration per outcome for the starts of the second and later chains
START_SPREAD = 10.0
RHAT_WARNING = 1.05

Orientation = Literal["column", "row"]


# ---------- Dirichlet helpers ----------

def sample_dirichlet(rng: np.random.Generator, concentration: np.ndarray, axis: int = -1) -> np.ndarray:
    """Dirichlet draws along `axis` by normalized gamma variates."""
    g = np.maximum(rng.standard_gamma(concentration), TINY)
    return g / g.sum(axis=axis, keepdims=True)


def dirichlet_covariance(alpha: np.ndarray) -> np.ndarray:
    """Cov(β_i, β_j) = (δ_ij E_i − E_i E_j) / (α₀ + 1) for β ~ Dirichlet(α)."""
    alpha = np.asarray(alpha, dtype=float)
    a0 = alpha.sum()
    mean = alpha / a0
    return (np.diag(mean) - np.outer(mean, mean)) / (a0 + 1.0)


def _column_log_likelihood(alpha: np.ndarray, log_rate_sums: np.ndarray, G: int) -> np.ndarray:
    """Σ_g log Dirichlet(β_g·k; α_·k) for every category k (vector over k)."""
    return (
        G * (gammaln(alpha.sum(axis=0)) - gammaln(alpha).sum(axis=0))
        + ((alpha - 1.0) * log_rate_sums).sum(axis=0)
    )


def _log_prior(alpha: np.ndarray, prior: tuple[float, float]) -> np.ndarray:
    shape, rate = prior
    # Gamma density on α plus the log-α Jacobian
    return (shape - 1.0) * np.log(alpha) - rate * alpha + np.log(alpha)


# ---------- Diagnostics ----------

def inference_data(
    draws: np.ndarray,
    alpha_draws: np.ndarray,
    acceptance: np.ndarray,
    outcomes: list[str],
    categories: list[str],
) -> az.InferenceData:
    """
    Chains x draws of the global rates and of α, with per-chain acceptance as
    sample stats. α and acceptance keep the sampler layout, transposed under row orientation.
    """
    posterior = xarray.Dataset(
        {
            "beta": (("chain", "draw", "outcome", "category"), draws),
            "alpha": (("chain", "draw", "alpha_dim_0", "alpha_dim_1"), alpha_draws),
        },
        coords={"outcome": outcomes, "category": categories},
    )
    sample_stats = xarray.Dataset({"acceptance": (("chain", "alpha_dim_0", "alpha_dim_1"), acceptance)})
    return az.InferenceData(posterior=posterior, sample_stats=sample_stats)


def chain_diagnostics(draws: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Rank-normalized split R̂ and bulk ESS per cell of chains x draws x J x K.
    Cells whose draws never move (empty or fully identified) get R̂ = 1 and ESS = all draws.
    """
    posterior = xarray.Dataset({"beta": (("chain", "draw", "outcome", "category"), draws)})
    rhat = np.asarray(az.rhat(posterior)["beta"].values, dtype=float)
    ess = np.asarray(az.ess(posterior)["beta"].values, dtype=float)
    frozen = np.ptp(draws.reshape(-1, *draws.shape[2:]), axis=0) == 0.0
    rhat = np.where(frozen, 1.0, rhat)
    ess = np.where(frozen, float(draws.shape[0] * draws.shape[1]), ess)
    return rhat, ess


# ---------- Sampler ----------

def starting_rates(counts: np.ndarray, shares: np.ndarray) -> np.ndarray:
    """
    Least-squares fit of outcome shares on category shares (J x K), floored and
    renormalized so every category column is a distribution over outcomes.
    """
    y = counts / counts.sum(axis=1, keepdims=True)
    coef = np.linalg.lstsq(shares, y, rcond=None)[0].T
    coef = np.clip(np.nan_to_num(coef, nan=0.0), START_FLOOR, 1.0)
    return coef / coef.sum(axis=0, keepdims=True)


def _chain(
    counts: np.ndarray,
    shares: np.ndarray,
    summarize: Callable[[np.ndarray], np.ndarray],
    iters: int,
    burnin: int,
    thin: int,
    seed: int,
    prior: tuple[float, float],
    start: np.ndarray,
) -> dict:
    rng = np.random.default_rng(seed)
    G, J = counts.shape
    K = shares.shape[1]
    rates = np.broadcast_to(start[None, :, :], (G, J, K)).copy()
    alpha = 2.0 * J * start
    step = np.full((J, K), INITIAL_STEP)
    accepted = np.zeros((J, K))
    window = np.zeros((J, K))

    kept = (iters - burnin) // thin
    draws = np.empty((kept, J, K))
    alpha_draws = np.empty((kept, J, K))
    local_sum = np.zeros((G, J, K))
    cells = None
    for it in range(iters):
        # latent allocation of m_gj over categories, ∝ x̄_gk β_gjk
        weights = shares[:, None, :] * rates
        total = weights.sum(axis=2, keepdims=True)
        probs = np.where(total > 0, weights / np.where(total > 0, total, 1.0), 1.0 / K)
        cells = rng.multinomial(counts, probs)

        # Dirichlet update of every category column over outcomes
        rates = sample_dirichlet(rng, alpha[None, :, :] + cells, axis=1)

        # Metropolis on log α, one outcome row at a time, vectorized over categories
        log_sums = np.log(np.maximum(rates, TINY)).sum(axis=0)
        for j in range(J):
            proposal = alpha.copy()
            proposal[j] = alpha[j] * np.exp(step[j] * rng.standard_normal(K))
            delta = (
                _column_log_likelihood(proposal, log_sums, G) - _column_log_likelihood(alpha, log_sums, G)
                + _log_prior(proposal[j], prior) - _log_prior(alpha[j], prior)
            )
            accept = np.log(rng.uniform(size=K)) < delta
            alpha[j] = np.where(accept, proposal[j], alpha[j])
            window[j] += accept
            if it >= burnin:
                accepted[j] += accept

        if it < burnin and (it + 1) % ADAPT_WINDOW == 0:
            rate = window / ADAPT_WINDOW
            step = np.where(rate < TARGET_ACCEPTANCE[0], step * 0.8, step)
            step = np.where(rate > TARGET_ACCEPTANCE[1], step * 1.25, step)
            window[:] = 0.0

        if it >= burnin and (it - burnin) % thin == 0:
            i = (it - burnin) // thin
            if i < kept:
                draws[i] = summarize(rates)
                alpha_draws[i] = alpha
                local_sum += rates

    return {
        "draws": draws,
        "alpha": alpha_draws,
        "acceptance": accepted / max(iters - burnin, 1),
        "step": step,
        "local": local_sum / max(kept, 1),
        "state": RxcState(cell_counts=cells, rates=rates, alpha=alpha.copy(), step_size=step.copy()),
    }


def _integer(values: np.ndarray, what: str) -> np.ndarray:
    if not np.allclose(values, np.round(values), rtol=0, atol=1e-9):
        raise DataValidationError(f"Non-integer {what}; the count model needs whole numbers.")
    return np.round(values).astype(np.int64)


def _prepare(table: AggregateTable) -> AggregateTable:
    if table.counts is None:
        raise DataValidationError("Outcome counts (m_*) are required for the count model.")
    if table.J == 1:
        table = table.complemented()
    table.require_integer_counts()
    counts = _integer(table.counts, "outcome counts")
    population = _integer(table.population, "population")
    off = np.flatnonzero(counts.sum(axis=1) != population)
    if off.size:
        raise DataValidationError(
            f"Geography '{table.geo[off[0]]}': outcome counts must add up to the population "
            "(add a residual outcome column)."
        )
    return table


def rosen_gibbs(
    table: AggregateTable,
    iters: int = 5000,
    burnin: int = 1000,
    seed: int = 0,
    chains: int = 2,
    alpha_prior: tuple[float, float] = ALPHA_PRIOR,
    orientation: Orientation = "column",
    thin: int = 1,
    threads: int | None = None,
) -> RosenPosterior:
    """
    Multinomial–Dirichlet count model by Gibbs sampling with latent cell counts.
    `orientation="column"` puts a Dirichlet over outcomes within each category;
    `"row"` runs the sampler on the transposed table and maps draws back.
    The first chain starts at the least-squares rates, later chains at Dirichlet
    draws around them, so R̂ can see chains that have not mixed.
    """
    if iters <= burnin:
        raise EstimationError(f"iters ({iters}) must exceed burnin ({burnin}).")
    table = _prepare(table)
    G, J, K = table.G, table.J, table.K
    n_gk = table.category_population
    n_k = n_gk.sum(axis=0)
    if n_k.sum() <= 0:
        raise EstimationError("Table has no population.")
    prior_only = n_k <= 0
    for k in np.flatnonzero(prior_only):
        logger.warning("[Rosen] category '%s' has no population; reported from its prior", table.categories[k])
    counts = _integer(table.counts, "outcome counts")

    if orientation == "column":
        def summarize(rates: np.ndarray) -> np.ndarray:
            weighted = np.einsum("gk,gjk->jk", n_gk, rates)
            return np.where(prior_only[None, :], rates.mean(axis=0), weighted / np.where(prior_only, 1.0, n_k))

        run_counts, run_shares = counts, table.shares
    elif orientation == "row":
        cat_counts = _integer(n_gk, "category counts")

        def summarize(theta: np.ndarray) -> np.ndarray:
            # theta is G x K x J: P(category k | outcome j)
            weighted = np.einsum("gkj,gj->jk", theta, counts)
            with np.errstate(invalid="ignore", divide="ignore"):
                return weighted / n_k[None, :]

        run_counts, run_shares = cat_counts, counts / table.population[:, None]
    else:
        raise ValueError(f"Unknown orientation '{orientation}'.")

    seeds = derived_seeds(seed, 2 * chains)
    start = starting_rates(run_counts, run_shares)
    starts = [start] + [
        sample_dirichlet(np.random.default_rng(s), START_SPREAD * start.shape[0] * start, axis=0)
        for s in seeds[chains + 1:]
    ]
    results = parallel_map(
        lambda c: _chain(run_counts, run_shares, summarize, iters, burnin, thin, seeds[c], alpha_prior, starts[c]),
        range(chains),
        threads,
    )
    draws = np.stack([r["draws"] for r in results])
    local = np.mean([r["local"] for r in results], axis=0)
    if orientation == "row":
        with np.errstate(invalid="ignore", divide="ignore"):
            local = np.einsum("gkj,gj->gjk", local, counts) / np.where(n_gk > 0, n_gk, np.nan)[:, None, :]
    rhat, ess = chain_diagnostics(draws)
    alpha_draws = np.stack([r["alpha"] for r in results])
    acceptance = np.stack([r["acceptance"] for r in results])
    posterior = RosenPosterior(
        draws=draws,
        alpha_draws=alpha_draws,
        categories=table.categories,
        outcomes=table.outcomes,
        acceptance=acceptance,
        step_size=np.stack([r["step"] for r in results]),
        rhat=rhat,
        prior_only=prior_only,
        orientation=orientation,
        local_means=local,
        metadata={"iters": iters, "burnin": burnin, "thin": thin, "seed": seed, "chains": chains,
                  "alpha_prior": alpha_prior, "final_states": [r["state"] for r in results], "ess": ess,
                  "inference_data": inference_data(draws, alpha_draws, acceptance, table.outcomes, table.categories)},
    )
    worst = float(np.nanmax(rhat)) if np.any(np.isfinite(rhat)) else float("nan")
    logger.info(
        "[Rosen] %d chain(s) x %d draws; max R̂ %.3f; min ESS %.0f; acceptance %.2f",
        chains, draws.shape[1], worst, float(np.nanmin(ess)) if np.any(np.isfinite(ess)) else float("nan"),
        float(acceptance.mean()),
    )
    if worst > RHAT_WARNING:
        logger.warning("[Rosen] chains disagree (max R̂ %.3f); raise iters or burnin", worst)
    return posterior


def rosen_estimates(table: AggregateTable, **kwargs) -> EstimateSet:
    """Posterior mean, sd and the 95% credible interval of the global rates."""
    post = rosen_gibbs(table, **kwargs)
    lower, upper = post.interval(0.95)
    quantiles = post.quantiles(QUANTILES)
    return EstimateSet(
        beta_hat=post.mean,
        se=post.sd,
        method="rosen",
        categories=post.categories,
        outcomes=post.outcomes,
        lower=lower,
        upper=upper,
        local_estimates=post.local_means,
        metadata={
            "quantiles": {f"q{100 * q:g}": quantiles[i] for i, q in enumerate(QUANTILES)},
            "rhat": post.rhat,
            "ess": post.metadata["ess"],
            "acceptance": post.acceptance.mean(axis=0),
            "prior_only": post.prior_only,
            "orientation": post.orientation,
            "posterior": post,
        },
    )
