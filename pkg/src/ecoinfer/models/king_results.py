from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TruncNormParams:
    """Location μ and covariance Σ of a bivariate normal truncated to the unit square."""
    mu: np.ndarray          # 2
    sigma: np.ndarray       # 2 x 2 SPD

    def __post_init__(self) -> None:
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        np.linalg.cholesky(self.sigma)  # raises LinAlgError if not SPD


@dataclass
class TomographyLine:
    """
    Segment of (b1, b2) in the unit square with ȳ = b1 x̄1 + b2 x̄2.
    For x̄1 in {0, 1} the line pins one coordinate and the other is free
    (NaN in the endpoints).
    """
    start: np.ndarray
    end: np.ndarray
    shares: np.ndarray
    outcome: float
    free_coordinate: int | None = None

    @property
    def degenerate(self) -> bool:
        return self.free_coordinate is not None or bool(np.allclose(self.start, self.end, atol=1e-15))

    @property
    def length(self) -> float:
        if self.free_coordinate is not None:
            return 0.0
        return float(np.linalg.norm(self.end - self.start))

    def point(self, t: np.ndarray | float) -> np.ndarray:
        """Point at arc length t from `start`."""
        t = np.asarray(t, dtype=float)
        if self.length == 0.0:
            return np.broadcast_to(self.start, t.shape + (2,)).copy()
        direction = (self.end - self.start) / self.length
        return self.start + t[..., None] * direction


@dataclass
class KingFit:
    params: TruncNormParams
    beta: np.ndarray                    # truncated-normal mean (β̂), 2
    log_likelihood: float
    evaluations: int
    converged: bool = True
    near_singular: bool = False
    finite_sample: np.ndarray | None = None     # N_gk-weighted mean of posterior local means (B̂), 2
    local_means: np.ndarray | None = None       # G x 2, NaN on free coordinates
    draws_global: np.ndarray | None = None      # draws x 2 of the weighted local mean
    trace: list[dict] = field(default_factory=list)


@dataclass
class EmFit:
    """Untruncated random-coefficient model for one outcome column."""
    beta: np.ndarray                    # K
    sigma: np.ndarray                   # K x K
    local_means: np.ndarray             # G x K
    iterations: int
    converged: bool
    stabilized: bool = False
