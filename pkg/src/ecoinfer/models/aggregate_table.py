from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..errors import DataValidationError, MissingCovariateError

MICRO_TOLERANCE = 1e-12
INGEST_TOLERANCE = 1e-6


@dataclass
class AggregateTable:
    """
    Per-geography aggregates: category shares, outcome means and/or counts,
    population, optional category counts and covariates.
    Rows follow the order of `geo`.
    """
    geo: list[str]
    categories: list[str]
    outcomes: list[str]
    shares: np.ndarray                          # G x K
    population: np.ndarray                      # G
    means: np.ndarray | None = None             # G x J
    counts: np.ndarray | None = None            # G x J
    category_counts: np.ndarray | None = None   # G x K
    covariates: np.ndarray | None = None        # G x p
    covariate_names: list[str] = field(default_factory=list)
    tolerance: float = INGEST_TOLERANCE

    def __post_init__(self) -> None:
        self.geo = [str(g) for g in self.geo]
        self.shares = np.asarray(self.shares, dtype=float)
        self.population = np.asarray(self.population, dtype=float)
        for name in ("means", "counts", "category_counts", "covariates"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value, dtype=float)
                if value.ndim == 1:
                    value = value[:, None]
                setattr(self, name, value)
        if self.covariates is not None and self.covariates.shape[1] == 0:
            self.covariates = None
        if self.covariates is None:
            self.covariate_names = []

    # ---------- Shape ----------

    @property
    def G(self) -> int:
        return len(self.geo)

    @property
    def K(self) -> int:
        return len(self.categories)

    @property
    def J(self) -> int:
        return len(self.outcomes)

    @property
    def p(self) -> int:
        return 0 if self.covariates is None else self.covariates.shape[1]

    # ---------- Derived quantities ----------

    @property
    def outcome_means(self) -> np.ndarray:
        """Ȳ (G x J): given means, or counts divided by population."""
        if self.means is not None:
            return self.means
        if self.counts is not None:
            return self.counts / self.population[:, None]
        raise DataValidationError("Table has neither outcome means nor outcome counts.")

    @property
    def category_population(self) -> np.ndarray:
        """N_gk (G x K); implied as x̄_gk * N_g when counts are absent (may be non-integer)."""
        if self.category_counts is not None:
            return self.category_counts
        return self.shares * self.population[:, None]

    def covariate(self, name: str) -> np.ndarray:
        if name not in self.covariate_names:
            raise MissingCovariateError(
                f"Covariate '{name}' not found (available: {', '.join(self.covariate_names) or 'none'})."
            )
        return self.covariates[:, self.covariate_names.index(name)]

    def select_covariates(self, names: Sequence[str]) -> "AggregateTable":
        """Keeps only the named covariates, in the given order."""
        names = list(names)
        if not names:
            return self.without_covariates()
        cols = np.column_stack([self.covariate(n) for n in names])
        return replace(self, covariates=cols, covariate_names=names)

    def without_covariates(self) -> "AggregateTable":
        return replace(self, covariates=None, covariate_names=[])

    def complemented(self) -> "AggregateTable":
        """A J=1 bounded outcome seen as J=2 complementary categories."""
        if self.J != 1:
            return self
        name = self.outcomes[0]
        means = None if self.means is None else np.column_stack([self.means[:, 0], 1.0 - self.means[:, 0]])
        counts = None if self.counts is None else np.column_stack(
            [self.counts[:, 0], self.population - self.counts[:, 0]]
        )
        return replace(self, outcomes=[name, f"not_{name}"], means=means, counts=counts)

    def merge_outcomes(self, sources: Sequence[str], into: str) -> "AggregateTable":
        """Merge several outcome columns into one (means and counts are additive)."""
        missing = [s for s in sources if s not in self.outcomes]
        if missing:
            raise DataValidationError(f"Unknown outcomes to merge: {', '.join(missing)}")
        idx = [self.outcomes.index(s) for s in sources]
        keep = [j for j in range(self.J) if j not in idx]
        insert_at = sum(1 for j in keep if j < min(idx))

        def _merge(values: np.ndarray | None) -> np.ndarray | None:
            if values is None:
                return None
            cols = [values[:, j] for j in keep]
            cols.insert(insert_at, values[:, idx].sum(axis=1))
            return np.column_stack(cols)

        names = [self.outcomes[j] for j in keep]
        names.insert(insert_at, into)
        return replace(self, outcomes=names, means=_merge(self.means), counts=_merge(self.counts))

    def collapse_binary(self, j: int, k: int) -> "AggregateTable":
        """2x2 view: outcome j versus the rest, category k versus the rest."""
        shares = np.column_stack([self.shares[:, k], 1.0 - self.shares[:, k]])
        cat_counts = None
        if self.category_counts is not None:
            cat_counts = np.column_stack(
                [self.category_counts[:, k], self.category_counts.sum(axis=1) - self.category_counts[:, k]]
            )
        means = None if self.means is None else self.means[:, [j]]
        counts = None if self.counts is None else self.counts[:, [j]]
        return replace(
            self,
            categories=[self.categories[k], f"not_{self.categories[k]}"],
            outcomes=[self.outcomes[j]],
            shares=shares,
            category_counts=cat_counts,
            means=means,
            counts=counts,
        )

    # ---------- Validation ----------

    def validate(self) -> None:
        G, K = self.G, self.K
        if G == 0:
            raise DataValidationError("Table has no geographies.")
        if self.shares.shape != (G, K):
            raise DataValidationError(f"Shares must be {G}x{K}, got {self.shares.shape}.")
        if self.population.shape != (G,):
            raise DataValidationError("Population must have one entry per geography.")
        tol = self.tolerance

        bad = np.flatnonzero(~(self.population > 0))
        if bad.size:
            raise DataValidationError(f"Geography '{self.geo[bad[0]]}': population must be positive.")

        if not np.all(np.isfinite(self.shares)):
            g = int(np.flatnonzero(~np.all(np.isfinite(self.shares), axis=1))[0])
            raise DataValidationError(f"Geography '{self.geo[g]}': non-finite share.")
        neg = np.flatnonzero(np.any(self.shares < -tol, axis=1))
        if neg.size:
            raise DataValidationError(f"Geography '{self.geo[neg[0]]}': negative share.")
        off = np.flatnonzero(np.abs(self.shares.sum(axis=1) - 1.0) > tol)
        if off.size:
            g = int(off[0])
            raise DataValidationError(
                f"Geography '{self.geo[g]}': shares sum to {self.shares[g].sum():.6g}, not 1 (tolerance {tol:g})."
            )

        if self.category_counts is not None:
            cc = self.category_counts
            if cc.shape != (G, K) or np.any(cc < 0):
                raise DataValidationError("Category counts must be a nonnegative G x K matrix.")
            off = np.flatnonzero(np.abs(cc.sum(axis=1) - self.population) > tol * np.maximum(self.population, 1.0))
            if off.size:
                raise DataValidationError(
                    f"Geography '{self.geo[off[0]]}': category counts do not sum to the population."
                )
            off = np.flatnonzero(np.any(np.abs(cc / self.population[:, None] - self.shares) > tol, axis=1))
            if off.size:
                raise DataValidationError(
                    f"Geography '{self.geo[off[0]]}': shares disagree with category counts / population."
                )

        if self.means is None and self.counts is None:
            raise DataValidationError("Table needs outcome means (y_*) or outcome counts (m_*).")
        J = self.J
        for name in ("means", "counts"):
            values = getattr(self, name)
            if values is None:
                continue
            if values.shape != (G, J):
                raise DataValidationError(f"Outcome {name} must be {G}x{J}, got {values.shape}.")
            if not np.all(np.isfinite(values)):
                g = int(np.flatnonzero(~np.all(np.isfinite(values), axis=1))[0])
                raise DataValidationError(f"Geography '{self.geo[g]}': non-finite outcome {name}.")
        if self.counts is not None:
            if np.any(self.counts < 0):
                g = int(np.flatnonzero(np.any(self.counts < 0, axis=1))[0])
                raise DataValidationError(f"Geography '{self.geo[g]}': negative outcome count.")
            over = np.flatnonzero(self.counts.sum(axis=1) > self.population * J + tol)
            if over.size:
                raise DataValidationError(f"Geography '{self.geo[over[0]]}': outcome counts exceed N_g * J.")
            if self.means is not None:
                off = np.flatnonzero(
                    np.any(np.abs(self.counts / self.population[:, None] - self.means) > tol, axis=1)
                )
                if off.size:
                    raise DataValidationError(
                        f"Geography '{self.geo[off[0]]}': outcome means disagree with counts / population."
                    )

        if self.covariates is not None:
            if self.covariates.shape[0] != G:
                raise DataValidationError("Covariates must have one row per geography.")
            if len(self.covariate_names) != self.covariates.shape[1]:
                raise DataValidationError("Every covariate column needs a name.")
            if not np.all(np.isfinite(self.covariates)):
                g = int(np.flatnonzero(~np.all(np.isfinite(self.covariates), axis=1))[0])
                raise DataValidationError(f"Geography '{self.geo[g]}': missing covariate entry.")

    def require_bounded(self) -> None:
        y = self.outcome_means
        bad = np.flatnonzero(np.any((y < -self.tolerance) | (y > 1.0 + self.tolerance), axis=1))
        if bad.size:
            raise DataValidationError(f"Geography '{self.geo[bad[0]]}': outcome outside [0, 1].")

    def require_integer_counts(self) -> None:
        if self.counts is None:
            raise DataValidationError("Outcome counts (m_*) are required.")
        for name, values in (("outcome counts", self.counts), ("category counts", self.category_counts)):
            if values is not None and not np.allclose(values, np.round(values), rtol=0, atol=1e-9):
                raise DataValidationError(f"Non-integer {name}.")
