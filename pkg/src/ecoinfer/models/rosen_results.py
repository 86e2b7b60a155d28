from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


@dataclass
class RxcState:
    """One Gibbs state: latent cell counts, local rates and Dirichlet concentrations."""
    cell_counts: np.ndarray     # G x J x K integers, sum over k equals m_gj
    rates: np.ndarray           # G x J x K, each category column sums to 1 over j
    alpha: np.ndarray           # J x K > 0
    step_size: np.ndarray       # J x K Metropolis scale on log α


@dataclass
class RosenPosterior:
    draws: np.ndarray               # chains x iterations x J x K (global β)
    alpha_draws: np.ndarray         # chains x iterations x J x K
    categories: list[str]
    outcomes: list[str]
    acceptance: np.ndarray          # chains x J x K
    step_size: np.ndarray           # chains x J x K
    rhat: np.ndarray                # J x K
    prior_only: np.ndarray          # K flags
    orientation: str = "column"
    local_means: np.ndarray | None = None   # G x J x K posterior mean of β_g
    metadata: dict = field(default_factory=dict)

    @property
    def pooled(self) -> np.ndarray:
        return self.draws.reshape(-1, *self.draws.shape[2:])

    @property
    def mean(self) -> np.ndarray:
        return self.pooled.mean(axis=0)

    @property
    def sd(self) -> np.ndarray:
        return self.pooled.std(axis=0, ddof=1)

    def quantiles(self, q: tuple[float, ...] = QUANTILES) -> np.ndarray:
        return np.quantile(self.pooled, q, axis=0)

    def interval(self, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        tail = (1.0 - level) / 2.0
        lo, hi = np.quantile(self.pooled, [tail, 1.0 - tail], axis=0)
        return lo, hi
