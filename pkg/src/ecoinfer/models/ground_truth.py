from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GroundTruth:
    """
    Conditional means known by construction: global B (J x K), local B_g
    (G x J x K, NaN where the cell has no individuals) and category totals N_k.
    """
    global_means: np.ndarray        # J x K
    local_means: np.ndarray         # G x J x K, NaN marks undefined cells
    category_totals: np.ndarray     # K
    geo: list[str]
    categories: list[str]
    outcomes: list[str]

    @property
    def defined(self) -> np.ndarray:
        """G x K mask of cells with N_gk > 0."""
        return ~np.all(np.isnan(self.local_means), axis=1)

    def weighted_local_average(self, category_population: np.ndarray) -> np.ndarray:
        """N_gk-weighted average of the defined local means, J x K."""
        w = np.where(self.defined, category_population, 0.0)       # G x K
        local = np.where(np.isnan(self.local_means), 0.0, self.local_means)
        num = np.einsum("gk,gjk->jk", w, local)
        den = w.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return num / den[None, :]
