from __future__ import annotations

import logging
import re

import numpy as np
from scipy.interpolate import BSpline

from ..errors import BasisSpecError
from ..models.aggregate_table import AggregateTable
from ..models.basis_spec import BasisSpec, BasisTerm
from ..models.design_matrix import CONSTANT_TERM, DesignMatrix

logger = logging.getLogger(__name__)

SPLINE_DEGREE = 3

_NAME = r"[A-Za-z_][A-Za-z0-9_.]*"
_TERM = re.compile(rf"^(?P<name>{_NAME})(?::(?P<transform>[a-z]+)(?:\((?P<arg>[^()]*)\))?)?$")
_INTERACTION = re.compile(rf"^(?P<a>{_NAME})\s*\*\s*(?P<b>{_NAME})$")


def _positive_int(text: str | None, term: str) -> int:
    try:
        value = int(str(text).strip())
    except ValueError:
        raise BasisSpecError(f"Basis term '{term}': expected a positive integer, got {text!r}.") from None
    if value < 1:
        raise BasisSpecError(f"Basis term '{term}': expected a positive integer, got {value}.")
    return value


def parse_basis(text: str | None) -> BasisSpec:
    """
    Comma-separated `name[:transform]` terms, e.g. "z1:spline(5),z2:bins(5),z1*z2".
    Transforms: identity, poly(d)/polynomial(d), spline(n) or spline(k1;k2;...), bins(n).
    Empty text or "intercept" is the constant-only basis.
    """
    if text is None or text.strip() in ("", "intercept"):
        return BasisSpec()
    terms = []
    for raw in text.split(","):
        term = raw.strip()
        if not term:
            raise BasisSpecError(f"Empty term in basis '{text}'.")
        inter = _INTERACTION.match(term)
        if inter:
            terms.append(BasisTerm(covariates=(inter["a"], inter["b"]), transform="interaction"))
            continue
        m = _TERM.match(term)
        if not m:
            raise BasisSpecError(f"Malformed basis term '{term}'.")
        name, transform, arg = m["name"], m["transform"] or "identity", m["arg"]
        if transform == "identity":
            if arg is not None:
                raise BasisSpecError(f"Basis term '{term}': identity takes no argument.")
            terms.append(BasisTerm(covariates=(name,), transform="identity"))
        elif transform in ("poly", "polynomial"):
            terms.append(BasisTerm(covariates=(name,), transform="polynomial", degree=_positive_int(arg, term)))
        elif transform == "bins":
            count = _positive_int(arg, term)
            if count < 2:
                raise BasisSpecError(f"Basis term '{term}': bins need at least 2 groups.")
            terms.append(BasisTerm(covariates=(name,), transform="bins", count=count))
        elif transform == "spline":
            if arg is None:
                raise BasisSpecError(f"Basis term '{term}': spline needs a knot count or knot list.")
            if ";" in arg or "." in arg:
                try:
                    knots = tuple(sorted(float(k) for k in arg.split(";") if k.strip()))
                except ValueError:
                    raise BasisSpecError(f"Basis term '{term}': knots must be numbers.") from None
                if not knots:
                    raise BasisSpecError(f"Basis term '{term}': empty knot list.")
                terms.append(BasisTerm(covariates=(name,), transform="spline", count=len(knots), knots=knots))
            else:
                terms.append(BasisTerm(covariates=(name,), transform="spline", count=_positive_int(arg, term)))
        else:
            raise BasisSpecError(f"Basis term '{term}': unknown transform '{transform}'.")
    return BasisSpec(terms=tuple(terms))


def _spline_columns(z: np.ndarray, term: BasisTerm, label: str) -> tuple[np.ndarray, list[str]]:
    lo, hi = float(z.min()), float(z.max())
    if term.knots:
        interior = np.asarray(term.knots, dtype=float)
        outside = interior[(interior <= lo) | (interior >= hi)]
        if outside.size:
            raise BasisSpecError(
                f"Spline knot(s) {', '.join(f'{k:g}' for k in outside)} for '{label}' outside data range ({lo:g}, {hi:g})."
            )
    else:
        interior = np.quantile(z, np.linspace(0.0, 1.0, term.count + 2)[1:-1])
    if np.unique(interior).size != interior.size:
        raise BasisSpecError(f"Spline knots for '{label}' are not distinct; use fewer knots.")
    k = SPLINE_DEGREE
    t = np.concatenate([[lo] * (k + 1), interior, [hi] * (k + 1)])
    B = BSpline.design_matrix(np.clip(z, lo, hi), t, k).toarray()
    # the B-splines sum to one; drop the first so the constant is not repeated
    B = B[:, 1:]
    return B, [f"{label}:s{i}" for i in range(1, B.shape[1] + 1)]


def _bin_columns(z: np.ndarray, term: BasisTerm, label: str) -> tuple[np.ndarray, list[str]]:
    edges = np.unique(np.quantile(z, np.linspace(0.0, 1.0, term.count + 1)))
    if edges.size - 1 < term.count:
        logger.warning("[Basis] '%s': only %d distinct quantile bins", label, edges.size - 1)
    groups = np.searchsorted(edges[1:-1], z, side="right")
    n_groups = edges.size - 1
    cols = np.column_stack([(groups == b).astype(float) for b in range(1, n_groups)]) if n_groups > 1 else np.empty((z.size, 0))
    return cols, [f"{label}:bin{b + 1}" for b in range(1, n_groups)]


def basis_columns(table: AggregateTable, spec: BasisSpec) -> tuple[np.ndarray, list[str]]:
    """Φ(z_g) for every geography (constant first) and the term labels."""
    columns = [np.ones((table.G, 1))]
    labels = [CONSTANT_TERM]
    for term in spec.terms:
        label = "*".join(term.covariates)
        if term.transform == "interaction":
            a, b = (table.covariate(n) for n in term.covariates)
            block, names = (a * b)[:, None], [label]
        else:
            z = table.covariate(term.covariates[0])
            if term.transform == "identity":
                block, names = z[:, None], [label]
            elif term.transform == "polynomial":
                block = np.column_stack([z ** p for p in range(1, term.degree + 1)])
                names = [label if p == 1 else f"{label}^{p}" for p in range(1, term.degree + 1)]
            elif term.transform == "spline":
                block, names = _spline_columns(z, term, label)
            elif term.transform == "bins":
                block, names = _bin_columns(z, term, label)
            else:
                raise BasisSpecError(f"Unknown transform '{term.transform}'.")
        columns.append(block)
        labels.extend(names)
    basis = np.hstack(columns)
    if not np.all(np.isfinite(basis)):
        raise BasisSpecError(f"Basis '{spec.describe()}' produced non-finite values.")
    return basis, labels


def expand_basis(table: AggregateTable, spec: BasisSpec | str | None) -> DesignMatrix:
    """Shares fully interacted with Φ(z): K·d columns, category blocks in order."""
    if not isinstance(spec, BasisSpec):
        spec = parse_basis(spec)
    basis, labels = basis_columns(table, spec)
    design = DesignMatrix(basis=basis, shares=table.shares, terms=labels, categories=table.categories)
    logger.debug("[Basis] %s -> %d columns", spec.describe(), design.n_columns)
    return design
