from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

Transform = Literal["identity", "polynomial", "spline", "bins", "interaction"]


@dataclass(frozen=True)
class BasisTerm:
    covariates: tuple[str, ...]     # one name, or two for an interaction
    transform: Transform
    degree: int = 1                 # polynomial degree
    count: int = 0                  # spline interior knots / number of bins
    knots: tuple[float, ...] = ()   # explicit spline knots

    def describe(self) -> str:
        name = "*".join(self.covariates)
        if self.transform == "identity" or self.transform == "interaction":
            return name
        if self.transform == "polynomial":
            return f"{name}:poly({self.degree})"
        if self.transform == "bins":
            return f"{name}:bins({self.count})"
        if self.knots:
            return f"{name}:spline({';'.join(f'{k:g}' for k in self.knots)})"
        return f"{name}:spline({self.count})"


@dataclass(frozen=True)
class BasisSpec:
    """Per-covariate expansion Φ(z). An empty spec is the constant-only (Goodman) basis."""
    terms: tuple[BasisTerm, ...] = field(default_factory=tuple)

    @property
    def covariates(self) -> list[str]:
        seen: list[str] = []
        for term in self.terms:
            for name in term.covariates:
                if name not in seen:
                    seen.append(name)
        return seen

    def describe(self) -> str:
        return ",".join(t.describe() for t in self.terms) or "intercept"
