from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

Z_95 = float(norm.ppf(0.975))


@dataclass
class EstimateSet:
    """
    Global estimates β̂ (J x K) with standard errors and intervals.
    Out-of-range estimates are flagged in `feasible`, never clipped.
    """
    beta_hat: np.ndarray                    # J x K
    se: np.ndarray                          # J x K
    method: str
    categories: list[str]
    outcomes: list[str]
    lower: np.ndarray | None = None         # J x K, defaults to beta ± 1.96 se
    upper: np.ndarray | None = None
    local_estimates: np.ndarray | None = None   # G x J x K
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.beta_hat = np.atleast_2d(np.asarray(self.beta_hat, dtype=float))
        self.se = np.atleast_2d(np.asarray(self.se, dtype=float))
        if self.se.shape != self.beta_hat.shape:
            raise ValueError(f"se shape {self.se.shape} does not match estimates {self.beta_hat.shape}")
        if np.any(self.se < 0):
            raise ValueError("Standard errors must be nonnegative.")
        if self.lower is None:
            self.lower = self.beta_hat - Z_95 * self.se
        if self.upper is None:
            self.upper = self.beta_hat + Z_95 * self.se

    @property
    def feasible(self) -> np.ndarray:
        """J x K flag: estimate inside [0, 1]."""
        return (self.beta_hat >= 0.0) & (self.beta_hat <= 1.0)

    def rows(self) -> list[dict]:
        """
        Long format in the shape of a predictor/outcome/estimate/se table.
        Posterior quantiles in `metadata["quantiles"]` become extra columns.
        """
        quantiles = self.metadata.get("quantiles", {})
        out = []
        for j, outcome in enumerate(self.outcomes):
            for k, category in enumerate(self.categories):
                out.append({
                    "method": self.method,
                    "predictor": category,
                    "outcome": outcome,
                    "estimate": float(self.beta_hat[j, k]),
                    "se": float(self.se[j, k]),
                    "lower": float(self.lower[j, k]),
                    "upper": float(self.upper[j, k]),
                    "feasible": bool(self.feasible[j, k]),
                    **{label: float(values[j, k]) for label, values in quantiles.items()},
                })
        return out
