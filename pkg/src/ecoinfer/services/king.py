from __future__ import annotations

import logging

import numpy as np
from scipy import integrate
from scipy.optimize import minimize
from scipy.special import ndtr

from ..errors import DataValidationError, EstimationError
from ..models.aggregate_table import AggregateTable
from ..models.estimate_set import EstimateSet
from ..models.king_results import KingFit, TomographyLine, TruncNormParams
from .bounds import closed_form_bounds
from .parallel import derived_seeds, parallel_map
from .random_coefficient import untruncated_em

logger = logging.getLogger(__name__)

LINE_TOLERANCE = 1e-10
SQUARE_TOLERANCE = 1e-8
BURN_IN = 500
DEFAULT_DRAWS = 2000
MAX_EVALUATIONS = 4000
# Outcomes exactly at 0 or 1 give a zero-length line; the likelihood uses this inset
LIKELIHOOD_INSET = 1e-6
NEAR_SINGULAR_CONDITION = 1e8
NEAR_SINGULAR_EIGENVALUE = 1e-6
WARM_START_EM_ITER = 500
MIN_START_SD = 0.02
# Initial simplex steps for (μ1, μ2, log L11, L21, log L22)
SIMPLEX_STEPS = np.array([0.1, 0.1, 0.5, 0.05, 0.5])

_LOG_2PI = np.log(2.0 * np.pi)


def _require_two_by_two(table: AggregateTable) -> None:
    if table.K != 2:
        raise DataValidationError(
            f"The truncated-normal model needs exactly 2 categories, got {table.K}; use the one-vs-rest variant."
        )


# ---------- Geometry ----------

def tomography(table: AggregateTable, g: int, outcome: int = 0) -> TomographyLine:
    """Segment of (b1, b2) in the unit square consistent with ȳ_g = b1 x̄_g1 + b2 x̄_g2."""
    _require_two_by_two(table)
    x = table.shares[g] / table.shares[g].sum()
    y = float(table.outcome_means[g, outcome])
    tol = table.tolerance
    if y < -tol or y > 1.0 + tol:
        raise DataValidationError(f"Geography '{table.geo[g]}': outcome {y:g} outside [0, 1].")
    y = min(max(y, 0.0), 1.0)
    if x[1] <= 0.0:
        return TomographyLine(start=np.array([y, np.nan]), end=np.array([y, np.nan]),
                              shares=x, outcome=y, free_coordinate=1)
    if x[0] <= 0.0:
        return TomographyLine(start=np.array([np.nan, y]), end=np.array([np.nan, y]),
                              shares=x, outcome=y, free_coordinate=0)
    lower, upper = closed_form_bounds(x[None, :], np.array([y]))
    # b2 decreases as b1 increases along the line
    start = np.array([lower[0, 0], upper[0, 1]])
    end = np.array([upper[0, 0], lower[0, 1]])
    return TomographyLine(start=start, end=end, shares=x, outcome=y)


def _line_gaussian(params: TruncNormParams, origin: np.ndarray, direction: np.ndarray) -> tuple[float, float, float]:
    """
    The bivariate normal restricted to origin + v·direction is proportional to
    a 1-D normal in v. Returns (mode, precision, log density at the mode).
    """
    P = np.linalg.inv(params.sigma)
    u = origin - params.mu
    a = float(direction @ P @ direction)
    mode = -float(direction @ P @ u) / a
    r = u + mode * direction
    _, logdet = np.linalg.slogdet(params.sigma)
    log_peak = -0.5 * float(r @ P @ r) - _LOG_2PI - 0.5 * logdet
    return mode, a, log_peak


# ---------- Truncation constant and moments ----------

def _conditional(params: TruncNormParams) -> tuple[float, float, float]:
    """sd of b1, slope of E[b2 | b1], and sd of b2 | b1."""
    s11, s12, s22 = params.sigma[0, 0], params.sigma[0, 1], params.sigma[1, 1]
    return float(np.sqrt(s11)), float(s12 / s11), float(np.sqrt(max(s22 - s12 * s12 / s11, 1e-300)))


def _outer(params: TruncNormParams, inner) -> float:
    """∫_0^1 φ(b1) · inner(b1) db1 with a break point at μ1."""
    sd1, slope, sd_c = _conditional(params)
    mu1, mu2 = params.mu

    def integrand(b1: float) -> float:
        z = (b1 - mu1) / sd1
        density = np.exp(-0.5 * z * z) / (sd1 * np.sqrt(2.0 * np.pi))
        m = mu2 + slope * (b1 - mu1)
        return density * inner(b1, m, sd_c)

    points = [mu1] if 0.0 < mu1 < 1.0 else None
    value, _ = integrate.quad(integrand, 0.0, 1.0, points=points, epsabs=1e-14, epsrel=SQUARE_TOLERANCE, limit=200)
    return value


def _mass(b1: float, m: float, s: float) -> float:
    return ndtr((1.0 - m) / s) - ndtr((0.0 - m) / s)


def _first_moment(b1: float, m: float, s: float) -> float:
    lo, hi = (0.0 - m) / s, (1.0 - m) / s
    pdf = lambda v: np.exp(-0.5 * v * v) / np.sqrt(2.0 * np.pi)
    return m * (ndtr(hi) - ndtr(lo)) + s * (pdf(lo) - pdf(hi))


def square_mass(params: TruncNormParams) -> float:
    """P(B ∈ [0, 1]²) under the untruncated normal."""
    return _outer(params, _mass)


def truncated_mean(params: TruncNormParams) -> np.ndarray:
    """Mean of the normal truncated to the unit square."""
    z = square_mass(params)
    if z <= 0.0:
        raise DataValidationError("Normal has no mass on the unit square.")
    e1 = _outer(params, lambda b1, m, s: b1 * _mass(b1, m, s))
    e2 = _outer(params, _first_moment)
    return np.clip(np.array([e1, e2]) / z, 0.0, 1.0)


# ---------- Likelihood ----------

def _frame(x1: float, y: float) -> tuple[np.ndarray, np.ndarray, float, float, float]:
    """
    Parameterize the line by the coordinate whose share is smaller, so the
    Jacobian 1/max(x1, x2) stays bounded. Returns (origin, direction, v0, v1, jacobian).
    """
    x2 = 1.0 - x1
    y = min(max(y, LIKELIHOOD_INSET), 1.0 - LIKELIHOOD_INSET)
    lower, upper = closed_form_bounds(np.array([[x1, x2]]), np.array([y]))
    if x1 >= x2:
        # v = b2, b1 = (y − x2 v)/x1
        return np.array([y / x1, 0.0]), np.array([-x2 / x1, 1.0]), lower[0, 1], upper[0, 1], 1.0 / x1
    return np.array([0.0, y / x2]), np.array([1.0, -x1 / x2]), lower[0, 0], upper[0, 0], 1.0 / x2


def line_integral(params: TruncNormParams, x1: float, y: float) -> float:
    """Density of ȳ_g under the untruncated normal: ∫ φ_Σ(b − μ) along the tomography line."""
    origin, direction, v0, v1, jac = _frame(x1, y)
    if v1 <= v0:
        return 0.0
    mode, a, log_peak = _line_gaussian(params, origin, direction)

    def integrand(v: float) -> float:
        return np.exp(log_peak - 0.5 * a * (v - mode) ** 2)

    points = [mode] if v0 < mode < v1 else None
    value, _ = integrate.quad(integrand, v0, v1, points=points, epsabs=LINE_TOLERANCE, epsrel=LINE_TOLERANCE, limit=200)
    return jac * value


def log_likelihood(params: TruncNormParams, shares: np.ndarray, y: np.ndarray) -> float:
    z = square_mass(params)
    if z <= 0.0:
        return -np.inf
    terms = np.array([line_integral(params, float(x1), float(v)) for x1, v in zip(shares, y)])
    return float(np.sum(np.log(np.maximum(terms, 1e-300))) - len(y) * np.log(z))


def _unpack(theta: np.ndarray) -> TruncNormParams:
    L = np.array([[np.exp(theta[2]), 0.0], [theta[3], np.exp(theta[4])]])
    return TruncNormParams(mu=theta[:2], sigma=L @ L.T)


def _pack(params: TruncNormParams) -> np.ndarray:
    L = np.linalg.cholesky(params.sigma)
    return np.array([params.mu[0], params.mu[1], np.log(L[0, 0]), L[1, 0], np.log(L[1, 1])])


def king_mle(
    table: AggregateTable,
    outcome: int = 0,
    start: TruncNormParams | None = None,
    max_evaluations: int = MAX_EVALUATIONS,
) -> KingFit:
    """
    Maximize Π_g L_g over (μ, Σ), L_g the line integral divided by the square
    mass. Nelder–Mead over (μ, log-Cholesky Σ), warm-started from the Goodman
    estimate and the untruncated EM covariance. If the evaluation cap is hit the
    best iterate is returned with `converged=False`.
    """
    _require_two_by_two(table)
    x1 = table.shares[:, 0] / table.shares.sum(axis=1)
    table.require_bounded()
    y = table.outcome_means[:, outcome]
    informative = int(np.sum((x1 > 0.0) & (x1 < 1.0)))
    if informative < 3:
        raise DataValidationError(f"Need at least 3 geographies with non-degenerate lines, got {informative}.")

    if start is None:
        start = warm_start(table, outcome)

    trace: list[dict] = []

    def objective(theta: np.ndarray) -> float:
        try:
            params = _unpack(theta)
            value = -log_likelihood(params, x1, y)
        except np.linalg.LinAlgError:
            value = np.inf
        if not np.isfinite(value):
            value = 1e300
        trace.append({"mu1": theta[0], "mu2": theta[1], "log_l11": theta[2], "l21": theta[3],
                      "log_l22": theta[4], "neg_log_likelihood": value})
        return value

    theta0 = _pack(start)
    simplex = np.vstack([theta0, theta0 + np.diag(SIMPLEX_STEPS)])
    res = minimize(
        objective,
        theta0,
        method="Nelder-Mead",
        options={"maxfev": max_evaluations, "xatol": 1e-6, "fatol": 1e-8, "adaptive": True,
                 "initial_simplex": simplex},
    )
    converged = bool(res.success)
    if not converged:
        logger.warning("[King] optimizer stopped without converging (%s); keeping the best iterate", res.message)

    params = _unpack(res.x)
    beta = truncated_mean(params)
    near_singular = is_near_singular(params.sigma)
    if near_singular:
        logger.warning("[King] estimated covariance is near singular (eigenvalues %s)",
                       np.array2string(np.linalg.eigvalsh(params.sigma), precision=3))
    logger.info("[King] optimizer %s after %d evaluations; β̂ = %s",
                "converged" if converged else "stopped", res.nfev, np.array2string(beta, precision=4))
    return KingFit(
        params=params,
        beta=beta,
        log_likelihood=-float(res.fun),
        evaluations=int(res.nfev),
        converged=converged,
        near_singular=near_singular,
        trace=trace[-50:],
    )


def is_near_singular(sigma: np.ndarray) -> bool:
    """Smallest eigenvalue below NEAR_SINGULAR_EIGENVALUE or condition number above NEAR_SINGULAR_CONDITION."""
    eig = np.linalg.eigvalsh(sigma)
    return bool(eig[0] <= NEAR_SINGULAR_EIGENVALUE or eig[-1] / eig[0] > NEAR_SINGULAR_CONDITION)


def warm_start(table: AggregateTable, outcome: int = 0) -> TruncNormParams:
    """Goodman coefficients clipped into the square and the untruncated EM covariance."""
    x = table.shares / table.shares.sum(axis=1, keepdims=True)
    y = table.outcome_means[:, outcome]
    coef = np.linalg.lstsq(x, y, rcond=None)[0]
    mu = np.clip(coef, 0.05, 0.95)
    try:
        sigma = untruncated_em(table, outcome, tol=1e-6, max_iter=WARM_START_EM_ITER).sigma
    except EstimationError:
        sigma = np.diag([0.1 ** 2, 0.1 ** 2])
    vals, vecs = np.linalg.eigh(0.5 * (sigma + sigma.T))
    vals = np.clip(vals, MIN_START_SD ** 2, 1.0)
    return TruncNormParams(mu=mu, sigma=vecs @ np.diag(vals) @ vecs.T)


# ---------- Local posterior sampling ----------

def king_local_sample(
    params: TruncNormParams,
    line: TomographyLine,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    burn_in: int = BURN_IN,
) -> np.ndarray:
    """
    Elliptical slice sampling of B_g on its tomography line (draws x 2).
    Works in arc length t ∈ [0, length] with the normal restricted to the line
    as the prior and the segment indicator as the likelihood.
    """
    if line.degenerate:
        return np.tile(line.start, (draws, 1))
    length = line.length
    direction = (line.end - line.start) / length
    mode, precision, _ = _line_gaussian(params, line.start, direction)
    sd = 1.0 / np.sqrt(precision)
    rng = np.random.default_rng(seed)

    t = min(max(mode, 0.0), length)
    out = np.empty(draws)
    for i in range(burn_in + draws):
        nu = rng.normal(0.0, sd)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        lo, hi = angle - 2.0 * np.pi, angle
        while True:
            proposal = mode + (t - mode) * np.cos(angle) + nu * np.sin(angle)
            if 0.0 <= proposal <= length:
                t = proposal
                break
            if angle < 0.0:
                lo = angle
            else:
                hi = angle
            angle = rng.uniform(lo, hi)
        if i >= burn_in:
            out[i - burn_in] = t
    return np.clip(line.point(out), 0.0, 1.0)


def _weighted_local(samples: np.ndarray, n_gk: np.ndarray) -> np.ndarray:
    """N_gk-weighted mean over geographies of per-geography draws (G x draws x 2 -> draws x 2)."""
    w = n_gk / n_gk.sum(axis=0)
    filled = np.where(np.isnan(samples), 0.0, samples)
    return np.einsum("gk,gdk->dk", w, filled)


def king_fit(
    table: AggregateTable,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    threads: int | None = None,
) -> EstimateSet:
    """
    MLE plus per-geography posterior draws for every outcome column.
    β̂ is the truncated-normal mean; B̂ (weighted posterior local means) goes to metadata.
    """
    _require_two_by_two(table)
    G, J = table.G, table.J
    n_gk = table.category_population
    seeds = derived_seeds(seed, G * J)
    beta = np.empty((J, 2))
    se = np.empty((J, 2))
    lower = np.empty((J, 2))
    upper = np.empty((J, 2))
    local = np.empty((G, J, 2))
    fits: list[KingFit] = []
    for j in range(J):
        fit = king_mle(table, outcome=j)
        lines = [tomography(table, g, j) for g in range(G)]
        samples = np.stack(parallel_map(
            lambda g: king_local_sample(fit.params, lines[g], draws, seeds[j * G + g]),
            range(G),
            threads,
        ))
        fit.local_means = samples.mean(axis=1)
        fit.draws_global = _weighted_local(samples, n_gk)
        fit.finite_sample = fit.draws_global.mean(axis=0)
        fits.append(fit)

        beta[j] = fit.beta
        se[j] = fit.draws_global.std(axis=0, ddof=1)
        lower[j], upper[j] = np.quantile(fit.draws_global, [0.025, 0.975], axis=0)
        local[:, j, :] = fit.local_means
    return EstimateSet(
        beta_hat=beta,
        se=se,
        method="king",
        categories=table.categories,
        outcomes=table.outcomes,
        lower=lower,
        upper=upper,
        local_estimates=local,
        metadata={
            "finite_sample": np.vstack([f.finite_sample for f in fits]),
            "mu": [f.params.mu.tolist() for f in fits],
            "sigma": [f.params.sigma.tolist() for f in fits],
            "log_likelihood": [f.log_likelihood for f in fits],
            "near_singular": [f.near_singular for f in fits],
            "converged": [f.converged for f in fits],
            "draws": draws,
            "seed": seed,
            "fits": fits,
        },
    )


def king_one_vs_rest(
    table: AggregateTable,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    threads: int | None = None,
) -> EstimateSet:
    """The 2x2 model on every (outcome, category) pair, other categories pooled."""
    J, K = table.J, table.K
    beta = np.empty((J, K))
    se = np.empty((J, K))
    lower = np.empty((J, K))
    upper = np.empty((J, K))
    converged = np.ones((J, K), dtype=bool)
    cell_seeds = derived_seeds(seed, J * K)
    for j in range(J):
        for k in range(K):
            sub = table.collapse_binary(j, k)
            est = king_fit(sub, draws=draws, seed=cell_seeds[j * K + k], threads=threads)
            beta[j, k], se[j, k] = est.beta_hat[0, 0], est.se[0, 0]
            lower[j, k], upper[j, k] = est.lower[0, 0], est.upper[0, 0]
            converged[j, k] = est.metadata["converged"][0]
            logger.debug("[King] one-vs-rest (%s, %s): %.4f", table.outcomes[j], table.categories[k], beta[j, k])
    return EstimateSet(
        beta_hat=beta,
        se=se,
        method="king-ovr",
        categories=table.categories,
        outcomes=table.outcomes,
        lower=lower,
        upper=upper,
        metadata={"draws": draws, "seed": seed, "converged": converged.tolist()},
    )
