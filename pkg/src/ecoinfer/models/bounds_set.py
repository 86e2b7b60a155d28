from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class BoundsSet:
    """Duncan–Davis intervals per geography and cell, plus the aggregated intervals."""
    lower: np.ndarray           # G x J x K
    upper: np.ndarray           # G x J x K
    vacuous: np.ndarray         # G x K, x̄_gk = 0 so the cell is uninformative
    geo: list[str]
    categories: list[str]
    outcomes: list[str]
    outcome_range: tuple[float, float] = (0.0, 1.0)
    global_lower: np.ndarray | None = None     # J x K
    global_upper: np.ndarray | None = None

    def rows(self) -> list[dict]:
        out = []
        for g, geo in enumerate(self.geo):
            for j, outcome in enumerate(self.outcomes):
                for k, category in enumerate(self.categories):
                    out.append({
                        "geo": geo,
                        "outcome": outcome,
                        "category": category,
                        "lo": float(self.lower[g, j, k]),
                        "hi": float(self.upper[g, j, k]),
                        "vacuous_flag": bool(self.vacuous[g, k]),
                    })
        return out

    def global_rows(self) -> list[dict]:
        out = []
        if self.global_lower is None:
            return out
        for j, outcome in enumerate(self.outcomes):
            for k, category in enumerate(self.categories):
                out.append({
                    "outcome": outcome,
                    "category": category,
                    "lo": float(self.global_lower[j, k]),
                    "hi": float(self.global_upper[j, k]),
                })
        return out
