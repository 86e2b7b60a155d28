from __future__ import annotations

import logging
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import pandas as pd

from config import INGEST_TOLERANCE
from ..errors import DataValidationError, InputFileError
from ..models.aggregate_table import AggregateTable
from ..models.ground_truth import GroundTruth
from ..models.micro_data import MicroData

logger = logging.getLogger(__name__)

# Columns added to every emitted table; ignored on the way back in
METADATA_COLUMNS = ("seed", "config_hash")


def _read(path: Path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f"Input file not found: {path}")
    try:
        df = pd.read_csv(path, encoding="utf-8", dtype={"geo": str})
    except (UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputFileError(f"Cannot read {path}: {e}") from e
    df.columns = [str(c).strip() for c in df.columns]
    return df.drop(columns=[c for c in METADATA_COLUMNS if c in df.columns])


def _numeric(df: pd.DataFrame, columns: list[str]) -> np.ndarray:
    """Columns as floats; the first non-numeric cell is reported by row and column."""
    out = np.empty((len(df), len(columns)))
    for i, col in enumerate(columns):
        values = pd.to_numeric(df[col], errors="coerce")
        bad = values.isna() & df[col].notna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataValidationError(f"Row {row}: column '{col}' has non-numeric value {df[col].iloc[row]!r}.")
        out[:, i] = values.to_numpy(dtype=float)
    return out


def _prefixed(df: pd.DataFrame, prefix: str) -> list[str]:
    return [c for c in df.columns if c.startswith(prefix) and len(c) > len(prefix)]


def _require(df: pd.DataFrame, columns: Sequence[str], path: Path) -> None:
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise DataValidationError(f"{path}: missing required column(s): {', '.join(missing)}")


def load_aggregate(path: Path, tolerance: float = INGEST_TOLERANCE) -> AggregateTable:
    """geo, x_<cat>..., n, [n_<cat>...], y_<out>... and/or m_<out>..., [z_<name>...]"""
    df = _read(path)
    _require(df, ["geo", "n"], path)
    share_cols = _prefixed(df, "x_")
    if len(share_cols) < 2:
        raise DataValidationError(f"{path}: at least two share columns (x_<category>) are required.")
    categories = [c[2:] for c in share_cols]
    mean_cols = _prefixed(df, "y_")
    count_cols = _prefixed(df, "m_")
    if not mean_cols and not count_cols:
        raise DataValidationError(f"{path}: outcome columns (y_<outcome> or m_<outcome>) are required.")
    if mean_cols and count_cols and [c[2:] for c in mean_cols] != [c[2:] for c in count_cols]:
        raise DataValidationError(f"{path}: y_* and m_* columns must name the same outcomes.")
    outcomes = [c[2:] for c in (mean_cols or count_cols)]

    cat_count_cols = [f"n_{c}" for c in categories]
    present = [c for c in cat_count_cols if c in df.columns]
    if present and len(present) != len(cat_count_cols):
        raise DataValidationError(f"{path}: category counts must be given for every category or none.")
    cov_cols = _prefixed(df, "z_")

    table = AggregateTable(
        geo=df["geo"].astype(str).tolist(),
        categories=categories,
        outcomes=outcomes,
        shares=_numeric(df, share_cols),
        population=_numeric(df, ["n"])[:, 0],
        means=_numeric(df, mean_cols) if mean_cols else None,
        counts=_numeric(df, count_cols) if count_cols else None,
        category_counts=_numeric(df, cat_count_cols) if present else None,
        covariates=_numeric(df, cov_cols) if cov_cols else None,
        covariate_names=[c[2:] for c in cov_cols],
        tolerance=tolerance,
    )
    table.validate()
    logger.info("[Loader] %s: G=%d, K=%d, J=%d, p=%d", Path(path).name, table.G, table.K, table.J, table.p)
    return table


def load_micro(path: Path, categories: Sequence[str] | int | None = None) -> MicroData:
    """
    geo, cat, then y_<out> one-hot columns or a single bounded `y`.

    `cat` holds integer indices or category names. Declaring `categories`
    (names or a count K) lets an out-of-range index be detected.
    """
    df = _read(path)
    _require(df, ["geo", "cat"], path)

    raw = df["cat"]
    numeric = pd.to_numeric(raw, errors="coerce")
    if numeric.notna().all():
        values = numeric.to_numpy()
        if not np.allclose(values, np.round(values)):
            row = int(np.flatnonzero(values != np.round(values))[0])
            raise DataValidationError(f"Row {row}: category index {values[row]!r} is not an integer.")
        index = values.astype(int)
        if categories is None:
            names = [str(k) for k in range(int(index.max()) + 1)]
        elif isinstance(categories, int):
            names = [str(k) for k in range(categories)]
        else:
            names = [str(c) for c in categories]
    else:
        labels = raw.astype(str).tolist()
        if categories is None or isinstance(categories, int):
            names = sorted(set(labels))
        else:
            names = [str(c) for c in categories]
        lookup = {c: i for i, c in enumerate(names)}
        unknown = [i for i, c in enumerate(labels) if c not in lookup]
        if unknown:
            raise DataValidationError(f"Row {unknown[0]}: unknown category {labels[unknown[0]]!r}.")
        index = np.array([lookup[c] for c in labels], dtype=int)

    onehot = _prefixed(df, "y_")
    if onehot:
        outcome = _numeric(df, onehot)
        outcomes = [c[2:] for c in onehot]
        categorical = True
    elif "y" in df.columns:
        outcome = _numeric(df, ["y"])
        outcomes = ["y"]
        categorical = False
        bad = np.flatnonzero((outcome[:, 0] < 0) | (outcome[:, 0] > 1))
        if bad.size:
            raise DataValidationError(f"Row {int(bad[0])}: scalar outcome outside [0, 1].")
    else:
        raise DataValidationError(f"{path}: outcome columns (y_<outcome> or y) are required.")

    micro = MicroData(
        geo=df["geo"].astype(str).to_numpy(dtype=object),
        category=index,
        outcome=outcome,
        categories=names,
        outcomes=outcomes,
        categorical=categorical,
    )
    micro.validate()
    logger.info("[Loader] %s: %d records in %d geographies", Path(path).name, len(micro), len(micro.geographies))
    return micro


def load_csv(
    path: Path,
    schema: Literal["aggregate", "micro"],
    categories: Sequence[str] | int | None = None,
) -> AggregateTable | MicroData:
    if schema == "aggregate":
        return load_aggregate(path)
    if schema == "micro":
        return load_micro(path, categories)
    raise ValueError(f"Unknown schema '{schema}' (expected 'aggregate' or 'micro').")


def load_truth(path: Path, table: AggregateTable) -> GroundTruth:
    """Read a truth CSV written by `simulate` (outcome, category, global, plus optional geo-level rows)."""
    df = _read(path)
    _require(df, ["outcome", "category", "truth"], path)
    J, K, G = table.J, table.K, table.G
    global_means = np.full((J, K), np.nan)
    local = np.full((G, J, K), np.nan)
    geo_index = {g: i for i, g in enumerate(table.geo)}
    has_geo = "geo" in df.columns
    for row in df.itertuples(index=False):
        try:
            j = table.outcomes.index(str(row.outcome))
            k = table.categories.index(str(row.category))
        except ValueError as e:
            raise DataValidationError(f"{path}: truth row names unknown cell ({row.outcome}, {row.category}).") from e
        geo = getattr(row, "geo", None) if has_geo else None
        if geo is None or (isinstance(geo, float) and np.isnan(geo)) or str(geo) in ("", "__global__"):
            global_means[j, k] = float(row.truth)
        elif str(geo) in geo_index:
            local[geo_index[str(geo)], j, k] = float(row.truth)
    if np.any(np.isnan(global_means)):
        raise DataValidationError(f"{path}: global truth missing for some cells.")
    return GroundTruth(
        global_means=global_means,
        local_means=local,
        category_totals=table.category_population.sum(axis=0),
        geo=table.geo,
        categories=table.categories,
        outcomes=table.outcomes,
    )
