from __future__ import annotations

from dataclasses import dataclass, field

import pandas as pd


@dataclass
class MetricReport:
    """
    Method comparison against known truth.
    `cells` has one row per method x outcome x category (estimate, truth, error,
    abs_error, covered); `summary` one row per method (ME, MAE, coverage).
    Failed methods are recorded in `failures` instead of raising.
    """
    cells: pd.DataFrame
    summary: pd.DataFrame
    failures: dict[str, str] = field(default_factory=dict)

    def long_format(self) -> pd.DataFrame:
        """Plot-ready: one row per method x cell x metric."""
        melted = self.cells.melt(
            id_vars=["method", "outcome", "category"],
            value_vars=[c for c in ("estimate", "truth", "error", "abs_error", "covered") if c in self.cells],
            var_name="metric",
            value_name="value",
        )
        return melted.astype({"value": float})
