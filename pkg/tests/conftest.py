from __future__ import annotations

import numpy as np
import pytest

from ecoinfer.models.aggregate_table import AggregateTable
from ecoinfer.models.micro_data import MicroData


def random_micro(rng: np.random.Generator, G: int = 8, K: int = 3, J: int = 2, size: int = 40) -> MicroData:
    """Categorical micro-data with uneven geography sizes and some empty cells."""
    geo, category, outcome = [], [], []
    for g in range(G):
        n = int(rng.integers(1, size))
        probs = rng.dirichlet(np.full(K, 0.7))
        geo.extend([f"g{g}"] * n)
        category.extend(rng.choice(K, size=n, p=probs).tolist())
        outcome.extend(rng.integers(0, J, size=n).tolist())
    return MicroData(
        geo=np.asarray(geo, dtype=object),
        category=np.asarray(category, dtype=int),
        outcome=np.eye(J)[np.asarray(outcome)],
        categories=[f"c{k}" for k in range(K)],
        outcomes=[f"o{j}" for j in range(J)],
    )


def linear_table(
    rng: np.random.Generator,
    G: int = 50,
    beta: tuple[float, float] = (0.7, 0.3),
    covariates: np.ndarray | None = None,
    noise: float = 0.0,
) -> AggregateTable:
    """Two-category table with ȳ = x̄ᵀβ (+ noise)."""
    x1 = rng.uniform(0.1, 0.9, G)
    shares = np.column_stack([x1, 1.0 - x1])
    y = shares @ np.asarray(beta) + noise * rng.standard_normal(G)
    return AggregateTable(
        geo=[f"g{g}" for g in range(G)],
        categories=["a", "b"],
        outcomes=["y"],
        shares=shares,
        population=np.full(G, 100.0),
        means=np.clip(y, 0.0, 1.0),
        covariates=covariates,
        covariate_names=[f"z{i + 1}" for i in range(covariates.shape[1])] if covariates is not None else [],
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def small_table() -> AggregateTable:
    """Three geographies, two categories, hand-checkable."""
    return AggregateTable(
        geo=["north", "south", "east"],
        categories=["a", "b"],
        outcomes=["yes"],
        shares=np.array([[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]]),
        population=np.array([100.0, 200.0, 50.0]),
        means=np.array([0.3, 0.5, 0.8]),
    )
