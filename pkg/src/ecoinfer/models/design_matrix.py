from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CONSTANT_TERM = "1"


@dataclass
class DesignMatrix:
    """
    Shares fully interacted with a covariate basis Φ(z):
    column (k, t) = x̄_gk * Φ_t(z_g), laid out category block by category block.
    There is no standalone intercept; the constant term of Φ gives each
    category its unconditional share column.
    """
    basis: np.ndarray           # G x d, first column is the constant
    shares: np.ndarray          # G x K
    terms: list[str]            # d basis term labels
    categories: list[str]

    def __post_init__(self) -> None:
        self.basis = np.asarray(self.basis, dtype=float)
        self.shares = np.asarray(self.shares, dtype=float)
        if self.basis.shape[0] != self.shares.shape[0]:
            raise ValueError("Basis and shares must have the same number of rows.")

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    @property
    def K(self) -> int:
        return self.shares.shape[1]

    @property
    def n_columns(self) -> int:
        return self.K * self.d

    @property
    def labels(self) -> list[tuple[str, str]]:
        return [(c, t) for c in self.categories for t in self.terms]

    @property
    def column_names(self) -> list[str]:
        return [c if t == CONSTANT_TERM else f"{c}:{t}" for c, t in self.labels]

    @property
    def penalized(self) -> np.ndarray:
        """False on each category's unconditional share column."""
        return np.array([t != CONSTANT_TERM for _, t in self.labels])

    @property
    def matrix(self) -> np.ndarray:
        return self.interact(self.shares)

    def interact(self, shares: np.ndarray, basis: np.ndarray | None = None) -> np.ndarray:
        phi = self.basis if basis is None else basis
        return (shares[:, :, None] * phi[:, None, :]).reshape(phi.shape[0], -1)

    def counterfactual(self, k: int, basis: np.ndarray | None = None) -> np.ndarray:
        """Rows with x̄ set to the one-hot vector of category k, covariates unchanged."""
        phi = self.basis if basis is None else basis
        onehot = np.zeros((phi.shape[0], self.K))
        onehot[:, k] = 1.0
        return self.interact(onehot, phi)

    def counterfactual_stack(self) -> np.ndarray:
        """(G*K) x q matrix of all one-hot predictions, row g*K + k."""
        G = self.basis.shape[0]
        rows = np.stack([self.counterfactual(k) for k in range(self.K)], axis=1)
        return rows.reshape(G * self.K, -1)

    def coefficient_matrix(self, coef: np.ndarray) -> np.ndarray:
        """Reshape a coefficient vector into K x d (category blocks)."""
        return np.asarray(coef).reshape(self.K, self.d)

    def varying_coefficients(self, coef: np.ndarray) -> np.ndarray:
        """f̂_k(z_g) for every geography: G x K."""
        return self.basis @ self.coefficient_matrix(coef).T
