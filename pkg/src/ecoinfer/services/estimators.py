from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import UsageError
from ..models.aggregate_table import AggregateTable
from ..models.estimate_set import Z_95, EstimateSet
from .bounds import global_bounds, local_bounds
from .dml import dml_estimates, ridge_plugin_estimates
from .goodman import extended_goodman_fit, goodman_fit
from .king import DEFAULT_DRAWS, king_fit, king_one_vs_rest
from .random_coefficient import em_estimates
from .rosen import rosen_estimates

logger = logging.getLogger(__name__)

MethodFn = Callable[[AggregateTable], EstimateSet]

METHOD_NAMES = (
    "goodman",
    "goodman-z",
    "dml",
    "ridge",
    "ridge-bounded",
    "king",
    "king-em",
    "rosen",
    "bounds-midpoint",
)


@dataclass
class MethodOptions:
    """Settings shared by every method; each method reads the ones it understands."""
    covariates: Sequence[str] | None = None     # None: every covariate on the table
    basis: str | None = None                    # None: identity on every covariate
    riesz_basis: str | None = None
    lambda_: float | str = "auto"
    bounds: tuple[float, float] | None = None
    weighted: bool = False
    draws: int = DEFAULT_DRAWS
    iters: int = 5000
    burnin: int = 1000
    chains: int = 2
    orientation: str = "column"
    seed: int = 0
    threads: int | None = None


def _covariates(table: AggregateTable, options: MethodOptions) -> list[str]:
    return list(table.covariate_names if options.covariates is None else options.covariates)


def _basis(table: AggregateTable, options: MethodOptions) -> str:
    if options.basis is not None:
        return options.basis
    return ",".join(_covariates(table, options))


def bounds_midpoint(table: AggregateTable) -> EstimateSet:
    """Centre of the aggregated Duncan–Davis interval; the interval is reported as-is."""
    bounds = global_bounds(table, local_bounds(table))
    lo, hi = bounds.global_lower, bounds.global_upper
    return EstimateSet(
        beta_hat=(lo + hi) / 2.0,
        se=(hi - lo) / (2.0 * Z_95),
        method="bounds-midpoint",
        categories=table.categories,
        outcomes=table.outcomes,
        lower=lo,
        upper=hi,
    )


def _king(table: AggregateTable, options: MethodOptions) -> EstimateSet:
    if table.K == 2:
        return king_fit(table, draws=options.draws, seed=options.seed, threads=options.threads)
    return king_one_vs_rest(table, draws=options.draws, seed=options.seed, threads=options.threads)


def build_method(name: str, options: MethodOptions | None = None) -> MethodFn:
    """`table -> EstimateSet` for a registered method name."""
    options = options or MethodOptions()
    builders: dict[str, MethodFn] = {
        "goodman": lambda t: goodman_fit(t, options.weighted),
        "goodman-z": lambda t: extended_goodman_fit(t, _covariates(t, options), options.weighted),
        "dml": lambda t: dml_estimates(t, _basis(t, options), options.riesz_basis, options.lambda_,
                                       bounds=options.bounds),
        "ridge": lambda t: ridge_plugin_estimates(t, _basis(t, options), options.lambda_),
        "ridge-bounded": lambda t: ridge_plugin_estimates(t, _basis(t, options), options.lambda_,
                                                          options.bounds or (0.0, 1.0)),
        "king": lambda t: _king(t, options),
        "king-em": em_estimates,
        "rosen": lambda t: rosen_estimates(
            t, iters=options.iters, burnin=options.burnin, seed=options.seed, chains=options.chains,
            orientation=options.orientation, threads=options.threads,
        ),
        "bounds-midpoint": bounds_midpoint,
    }
    if name not in builders:
        raise UsageError(f"Unknown method '{name}'. Choose from: {', '.join(METHOD_NAMES)}.")
    return builders[name]


def build_methods(names: Sequence[str], options: MethodOptions | None = None) -> dict[str, MethodFn]:
    return {name: build_method(name, options) for name in names}


def parse_method_list(text: str) -> list[str]:
    names = [n.strip() for n in text.split(",") if n.strip()]
    if not names:
        raise UsageError("No methods given.")
    for name in names:
        if name not in METHOD_NAMES:
            raise UsageError(f"Unknown method '{name}'. Choose from: {', '.join(METHOD_NAMES)}.")
    return names


def constant_method(value: float | np.ndarray, name: str = "constant") -> MethodFn:
    """Reference method predicting the same value for every cell with zero se."""
    def run(table: AggregateTable) -> EstimateSet:
        beta = np.broadcast_to(np.asarray(value, dtype=float), (table.J, table.K)).copy()
        return EstimateSet(beta_hat=beta, se=np.zeros_like(beta), method=name,
                           categories=table.categories, outcomes=table.outcomes)
    return run
