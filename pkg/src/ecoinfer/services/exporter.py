from __future__ import annotations

import logging
import os
import tempfile
from pathlib import Path
from typing import Iterable, Literal

import numpy as np
import pandas as pd

from ..models.aggregate_table import AggregateTable
from ..models.ground_truth import GroundTruth
from ..models.run_config import RunConfig

logger = logging.getLogger(__name__)

OutputFormat = Literal["csv", "json", "xlsx"]
SUFFIXES = {"csv": ".csv", "json": ".json", "xlsx": ".xlsx"}
GLOBAL_GEO = "__global__"


def table_frame(table: AggregateTable) -> pd.DataFrame:
    """Aggregate table in the loader's column scheme (geo, x_*, n, n_*, y_*, m_*, z_*)."""
    data: dict[str, object] = {"geo": table.geo}
    for k, c in enumerate(table.categories):
        data[f"x_{c}"] = table.shares[:, k]
    data["n"] = table.population
    if table.category_counts is not None:
        for k, c in enumerate(table.categories):
            data[f"n_{c}"] = table.category_counts[:, k]
    if table.means is not None:
        for j, o in enumerate(table.outcomes):
            data[f"y_{o}"] = table.means[:, j]
    if table.counts is not None:
        for j, o in enumerate(table.outcomes):
            data[f"m_{o}"] = table.counts[:, j]
    for i, name in enumerate(table.covariate_names):
        data[f"z_{name}"] = table.covariates[:, i]
    return pd.DataFrame(data)


def truth_frame(truth: GroundTruth) -> pd.DataFrame:
    """Global rows (geo = __global__) followed by the defined local cells."""
    rows = []
    for j, o in enumerate(truth.outcomes):
        for k, c in enumerate(truth.categories):
            rows.append({"geo": GLOBAL_GEO, "outcome": o, "category": c, "truth": float(truth.global_means[j, k])})
    for g, geo in enumerate(truth.geo):
        for j, o in enumerate(truth.outcomes):
            for k, c in enumerate(truth.categories):
                value = truth.local_means[g, j, k]
                if not np.isnan(value):
                    rows.append({"geo": geo, "outcome": o, "category": c, "truth": float(value)})
    return pd.DataFrame(rows, columns=["geo", "outcome", "category", "truth"])


def frame(rows: Iterable[dict] | pd.DataFrame) -> pd.DataFrame:
    return rows.copy() if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))


def stamp(df: pd.DataFrame, seed: int | None, config_hash: str) -> pd.DataFrame:
    """Every emitted table carries the run's seed and configuration hash."""
    df = df.copy()
    df["seed"] = seed if seed is not None else ""
    df["config_hash"] = config_hash
    return df


def _atomic_write(path: Path, write) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=path.suffix, dir=path.parent)
    os.close(fd)
    try:
        write(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_frame(df: pd.DataFrame, path: Path, fmt: OutputFormat = "csv") -> Path:
    path = Path(path).with_suffix(SUFFIXES[fmt])
    if fmt == "csv":
        _atomic_write(path, lambda p: df.to_csv(p, index=False, encoding="utf-8", lineterminator="\n"))
    elif fmt == "json":
        _atomic_write(path, lambda p: df.to_json(p, orient="records", indent=2, double_precision=15))
    elif fmt == "xlsx":
        def _excel(p: Path) -> None:
            with pd.ExcelWriter(p, engine="openpyxl") as writer:
                df.to_excel(writer, sheet_name="Data", index=False)
        _atomic_write(path, _excel)
    else:
        raise ValueError(f"Unknown output format '{fmt}'.")
    logger.info("[Export] %d rows -> %s", len(df), path)
    return path


def write_run_config(config: RunConfig, output_dir: Path) -> Path:
    path = Path(output_dir) / "run_config.json"
    payload = config.to_json() + "\n"
    _atomic_write(path, lambda p: p.write_text(payload, encoding="utf-8"))
    return path


def export_run(
    tables: dict[str, Iterable[dict] | pd.DataFrame],
    config: RunConfig,
    output_dir: Path,
) -> list[Path]:
    """
    Writes every named table (stamped with seed and config hash) and the resolved
    configuration. Callers compute everything first so a failure leaves no partial run.
    """
    output_dir = Path(output_dir)
    written = []
    for name, rows in tables.items():
        df = stamp(frame(rows), config.seed, config.config_hash)
        written.append(write_frame(df, output_dir / name, config.output_format))
    written.append(write_run_config(config, output_dir))
    return written
