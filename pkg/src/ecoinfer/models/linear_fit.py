from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .design_matrix import DesignMatrix


@dataclass
class LinearFit:
    """OLS/WLS fit of every outcome column on an interacted design (one statsmodels result per outcome)."""
    design: DesignMatrix
    coefficients: np.ndarray        # J x q
    covariance: np.ndarray          # J x q x q, HC1 sandwich
    results: list[Any]              # statsmodels RegressionResults, one per outcome
    outcomes: list[str]
    covariate_names: list[str] = field(default_factory=list)
    weighted: bool = False

    def predict(self, shares: np.ndarray, basis: np.ndarray | None = None) -> np.ndarray:
        """Fitted values G x J for arbitrary share vectors (covariates as observed unless `basis` given)."""
        X = self.design.interact(np.asarray(shares, dtype=float), basis)
        return X @ self.coefficients.T


@dataclass
class Diagnostics:
    """Influence measures per geography (J x G) and extrapolation gap per category."""
    leverage: np.ndarray                # G (design only)
    cooks_distance: np.ndarray          # J x G, +inf where leverage is 1
    studentized_residual: np.ndarray    # J x G, NaN where leverage is 1
    infinite_flag: np.ndarray           # G
    extrapolation_gap: np.ndarray       # K
    geo: list[str]
    categories: list[str]
    outcomes: list[str]

    def rows(self) -> list[dict]:
        out = []
        for j, outcome in enumerate(self.outcomes):
            for g, geo in enumerate(self.geo):
                out.append({
                    "geo": geo,
                    "outcome": outcome,
                    "leverage": float(self.leverage[g]),
                    "cooks_distance": float(self.cooks_distance[j, g]),
                    "studentized_residual": float(self.studentized_residual[j, g]),
                    "infinite_flag": bool(self.infinite_flag[g]),
                })
        return out

    def extrapolation_rows(self) -> list[dict]:
        return [
            {"category": c, "extrapolation_gap": float(self.extrapolation_gap[k])}
            for k, c in enumerate(self.categories)
        ]
