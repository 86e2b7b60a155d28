from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.optimize import nnls

from config import LAMBDA_GRID_POINTS
from ..errors import ConvergenceError, EstimationError
from ..models.design_matrix import DesignMatrix
from ..models.semiparametric_results import RidgeFit

logger = logging.getLogger(__name__)

GRID_SPAN = (1e-8, 1e4)
KKT_TOLERANCE = 1e-8
FEASIBILITY_SLACK = 1e-12
MAX_ACTIVE_SET_ITER = 500


def default_lambda_grid(design: DesignMatrix, points: int = LAMBDA_GRID_POINTS) -> np.ndarray:
    """Log-spaced grid over [1e-8, 1e4] · tr(XᵀX)/d."""
    X = design.matrix
    scale = float(np.einsum("ij,ij->", X, X)) / design.d
    return np.logspace(np.log10(GRID_SPAN[0]), np.log10(GRID_SPAN[1]), points) * scale


def _penalty(design: DesignMatrix) -> np.ndarray:
    return np.diag(design.penalized.astype(float))


def _solve(X: np.ndarray, y: np.ndarray, P: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Ridge coefficients and the inverse of XᵀX + λP."""
    A = X.T @ X + lam * P
    try:
        inv = linalg.inv(A, check_finite=False)
    except linalg.LinAlgError as e:
        raise EstimationError(f"Ridge system is singular at λ={lam:g}; use a positive penalty.") from e
    if not np.all(np.isfinite(inv)):
        raise EstimationError(f"Ridge system is singular at λ={lam:g}; use a positive penalty.")
    return inv @ (X.T @ y), inv


def loo_residuals(X: np.ndarray, y: np.ndarray, P: np.ndarray, lam: float) -> np.ndarray:
    """Leave-one-out residuals e_g / (1 − h_gg) without refitting."""
    w, inv = _solve(X, y, P, lam)
    hat = np.einsum("ij,jk,ik->i", X, inv, X)
    return (y - X @ w) / (1.0 - hat)


def loo_curve(design: DesignMatrix, y: np.ndarray, grid: Sequence[float]) -> np.ndarray:
    X, P = design.matrix, _penalty(design)
    return np.array([np.mean(loo_residuals(X, y, P, lam) ** 2) for lam in grid])


# ---------- Bound-constrained re-solve ----------

def _constraints(design: DesignMatrix, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    A w ≥ b for lo ≤ counterfactual prediction ≤ hi, on distinct prediction rows.
    Returns (A, b, inverse) where inverse maps each (g, k) row onto its distinct row.
    """
    C = design.counterfactual_stack()
    unique, inverse = np.unique(np.round(C, 12), axis=0, return_inverse=True)
    A = np.vstack([unique, -unique])
    b = np.concatenate([np.full(len(unique), lo), np.full(len(unique), -hi)])
    return A, b, inverse.ravel()


def _least_distance(Q: np.ndarray, c: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    min ½wᵀQw − cᵀw s.t. Aw ≥ b, as a least-distance program solved through
    nonnegative least squares (Lawson–Hanson).
    """
    L = linalg.cholesky(Q, lower=True)
    w0 = linalg.cho_solve((L, True), c)
    # u = Lᵀ(w − w0): min ‖u‖ s.t. (A L⁻ᵀ) u ≥ b − A w0
    M = linalg.solve_triangular(L, A.T, lower=True).T
    h = b - A @ w0
    E = np.vstack([M.T, h[None, :]])
    f = np.zeros(E.shape[0])
    f[-1] = 1.0
    v, _ = nnls(E, f, maxiter=50 * E.shape[1])
    r = E @ v - f
    if abs(r[-1]) < 1e-14:
        raise EstimationError("Bounded ridge QP is infeasible (numerically degenerate constraints).")
    u = -r[:-1] / r[-1]
    return w0 + linalg.solve_triangular(L.T, u, lower=False)


def _kkt_solve(Q: np.ndarray, c: np.ndarray, A_act: np.ndarray, b_act: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q, m = Q.shape[0], A_act.shape[0]
    K = np.block([[Q, -A_act.T], [A_act, np.zeros((m, m))]])
    rhs = np.concatenate([c, b_act])
    # active rows can be linearly dependent
    sol = linalg.lstsq(K, rhs, cond=None)[0]
    return sol[:q], sol[q:]


def kkt_residual(Q: np.ndarray, c: np.ndarray, A: np.ndarray, b: np.ndarray, w: np.ndarray, mu: np.ndarray) -> float:
    """Largest of scaled stationarity, primal and dual violation, and complementarity."""
    scale = max(1.0, float(np.max(np.abs(c))))
    slack = A @ w - b
    terms = (
        np.max(np.abs(Q @ w - c - A.T @ mu)) / scale,
        np.max(np.maximum(-slack, 0.0), initial=0.0),
        np.max(np.maximum(-mu, 0.0), initial=0.0),
        np.max(np.abs(mu * slack), initial=0.0) / scale,
    )
    return float(max(terms))


def bounded_solve(Q: np.ndarray, c: np.ndarray, A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Returns (w, multipliers, KKT residual). Feasible unconstrained solutions are returned as is."""
    w0 = linalg.solve(Q, c, assume_a="pos")
    if np.all(A @ w0 >= b - FEASIBILITY_SLACK):
        return w0, np.zeros(len(b)), 0.0

    w = _least_distance(Q, c, A, b)
    active = list(np.flatnonzero(np.abs(A @ w - b) <= 1e-9))
    mu_full = np.zeros(len(b))
    for _ in range(MAX_ACTIVE_SET_ITER):
        if active:
            w, mu = _kkt_solve(Q, c, A[active], b[active])
        else:
            w, mu = w0, np.empty(0)
        if mu.size and mu.min() < -KKT_TOLERANCE:
            active.pop(int(np.argmin(mu)))
            continue
        violation = b - A @ w
        worst = int(np.argmax(violation))
        if violation[worst] > KKT_TOLERANCE * 1e-2:
            active.append(worst)
            continue
        mu_full[:] = 0.0
        mu_full[active] = np.maximum(mu, 0.0)
        break
    else:
        raise ConvergenceError(f"Bounded ridge active-set polish did not converge in {MAX_ACTIVE_SET_ITER} iterations.")
    return w, mu_full, kkt_residual(Q, c, A, b, w, mu_full)


def ridge_fit(
    design: DesignMatrix,
    y: np.ndarray,
    lambda_grid: Sequence[float] | float | None = None,
    bounds: tuple[float, float] | None = None,
) -> RidgeFit:
    """
    Ridge on the interacted design with the penalty off the K share columns,
    λ chosen by closed-form leave-one-out error; optionally re-solved so every
    one-hot counterfactual prediction lies in `bounds`.
    """
    y = np.asarray(y, dtype=float)
    if lambda_grid is None:
        grid = default_lambda_grid(design)
    else:
        grid = np.atleast_1d(np.asarray(lambda_grid, dtype=float))
    if grid.size == 0 or np.any(grid < 0):
        raise EstimationError("λ grid must be a nonempty set of nonnegative values.")
    X, P = design.matrix, _penalty(design)
    if not np.all(np.isfinite(X)):
        raise EstimationError("Design matrix has non-finite entries.")

    curve = loo_curve(design, y, grid)
    best = int(np.nanargmin(curve))
    lam = float(grid[best])
    coef, _ = _solve(X, y, P, lam)
    fit = RidgeFit(design=design, coefficients=coef, penalty=lam, lambda_grid=grid, loo_curve=curve)
    logger.debug("[Ridge] λ=%.3g (grid point %d of %d)", lam, best + 1, grid.size)

    if bounds is not None:
        lo, hi = bounds
        A, b, inverse = _constraints(design, lo, hi)
        Q = X.T @ X + lam * P
        c = X.T @ y
        w, mu, residual = bounded_solve(Q, c, A, b)
        if residual > KKT_TOLERANCE:
            logger.warning("[Ridge] bounded fit KKT residual %.3g above %.0e", residual, KKT_TOLERANCE)
        n_unique = len(b) // 2
        G, K = design.shares.shape[0], design.K
        fit.coefficients = w
        fit.bounded = True
        fit.active_lower = (mu[:n_unique] > 0)[inverse].reshape(G, K)
        fit.active_upper = (mu[n_unique:] > 0)[inverse].reshape(G, K)
        fit.kkt_residual = residual
        logger.info(
            "[Ridge] bounded fit: %d lower / %d upper constraint(s) active, KKT residual %.2e",
            int(fit.active_lower.sum()), int(fit.active_upper.sum()), residual,
        )
    return fit
