from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .design_matrix import DesignMatrix


@dataclass
class RidgeFit:
    design: DesignMatrix
    coefficients: np.ndarray            # q
    penalty: float                      # selected λ
    lambda_grid: np.ndarray
    loo_curve: np.ndarray               # mean squared LOO error per grid point
    bounded: bool = False
    active_lower: np.ndarray | None = None    # G x K flags of binding lower bounds
    active_upper: np.ndarray | None = None
    kkt_residual: float = 0.0

    def fitted(self) -> np.ndarray:
        return self.design.matrix @ self.coefficients

    def counterfactual_predictions(self) -> np.ndarray:
        """f̂_k(z_g), G x K."""
        return self.design.varying_coefficients(self.coefficients)


@dataclass
class RieszFit:
    design: DesignMatrix
    category: int
    coefficients: np.ndarray            # ρ
    weights: np.ndarray                 # α_k(g), G
    target_moments: np.ndarray          # M̂
    penalty: float

    def moment_residual(self) -> float:
        X = self.design.matrix
        empirical = (self.weights[:, None] * X).mean(axis=0)
        return float(np.max(np.abs(empirical - self.target_moments)))


@dataclass
class DmlResult:
    """Per-outcome DML scores for one category; point = mean(s_g), se = sd(s_g)/sqrt(G)."""
    category: int
    outcomes: list[str]
    scores: np.ndarray                  # J x G
    point: np.ndarray                   # J
    se: np.ndarray                      # J
    plugin: np.ndarray                  # J, the uncorrected plug-in term
    ridge: list[RidgeFit] = field(default_factory=list)
    riesz: RieszFit | None = None
