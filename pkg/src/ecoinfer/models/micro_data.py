from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataValidationError


@dataclass
class MicroData:
    """
    Individual-level records: one row per person with its geography, its
    category index and its outcome (one-hot vector or bounded scalar).
    """
    geo: np.ndarray             # object array of geography ids, length N
    category: np.ndarray        # int array in [0, K)
    outcome: np.ndarray         # N x J floats
    categories: list[str]
    outcomes: list[str]
    categorical: bool = True    # outcome rows are one-hot indicators
    geographies: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.geo = np.asarray(self.geo, dtype=object)
        self.category = np.asarray(self.category)
        self.outcome = np.asarray(self.outcome, dtype=float)
        if self.outcome.ndim == 1:
            self.outcome = self.outcome[:, None]
        if not self.geographies:
            # first-appearance order
            _, first = np.unique(self.geo, return_index=True)
            self.geographies = [self.geo[i] for i in sorted(first)]

    @property
    def K(self) -> int:
        return len(self.categories)

    @property
    def J(self) -> int:
        return len(self.outcomes)

    def __len__(self) -> int:
        return len(self.category)

    def validate(self) -> None:
        n = len(self.category)
        if len(self.geo) != n or self.outcome.shape[0] != n:
            raise DataValidationError("Micro-data columns have different lengths.")
        if self.outcome.shape[1] != self.J:
            raise DataValidationError(
                f"Outcome has {self.outcome.shape[1]} columns but {self.J} outcome names."
            )
        if self.K < 2:
            raise DataValidationError(f"At least 2 categories are required, got {self.K}.")
        if not np.issubdtype(self.category.dtype, np.integer):
            raise DataValidationError("Category indices must be integers.")
        bad = np.flatnonzero((self.category < 0) | (self.category >= self.K))
        if bad.size:
            raise DataValidationError(
                f"Row {int(bad[0])}: category index {int(self.category[bad[0]])} outside [0, {self.K})."
            )
        if not np.all(np.isfinite(self.outcome)):
            row = int(np.flatnonzero(~np.all(np.isfinite(self.outcome), axis=1))[0])
            raise DataValidationError(f"Row {row}: outcome is not finite.")
        present = set(self.geo.tolist())
        for g in self.geographies:
            if g not in present:
                raise DataValidationError(f"Geography '{g}' has no records.")
        if self.categorical:
            one_hot = np.all(np.isin(self.outcome, (0.0, 1.0)), axis=1) & (self.outcome.sum(axis=1) == 1.0)
            if not np.all(one_hot):
                row = int(np.flatnonzero(~one_hot)[0])
                raise DataValidationError(f"Row {row}: categorical outcome is not a one-hot indicator.")
