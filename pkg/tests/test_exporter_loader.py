from __future__ import annotations

import json

import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from config import INGEST_TOLERANCE
from ecoinfer.errors import DataValidationError, InputFileError
from ecoinfer.models.run_config import RunConfig
from ecoinfer.models.scenario_spec import ScenarioSpec
from ecoinfer.services.csv_loader import load_aggregate, load_csv, load_micro, load_truth
from ecoinfer.services.exporter import export_run, stamp, table_frame, truth_frame, write_frame
from ecoinfer.services.scenarios import generate


def test_aggregate_and_truth_survive_csv(tmp_path):
    table, truth = generate(ScenarioSpec(scenario="C", G=30, seed=4))
    write_frame(stamp(table_frame(table), 4, "abc"), tmp_path / "data")
    write_frame(truth_frame(truth), tmp_path / "truth")

    loaded = load_aggregate(tmp_path / "data.csv")
    assert loaded.geo == table.geo
    assert loaded.categories == ["k1", "k2"]
    assert loaded.covariate_names == ["z1"]
    assert_allclose(loaded.shares, table.shares, rtol=1e-15)
    assert_allclose(loaded.outcome_means, table.outcome_means, rtol=1e-15)

    back = load_truth(tmp_path / "truth.csv", loaded)
    assert_allclose(back.global_means, truth.global_means, rtol=1e-15)
    assert_allclose(back.local_means, truth.local_means, rtol=1e-15)


def test_counts_scenario_keeps_integer_columns(tmp_path):
    table, _ = generate(ScenarioSpec(scenario="A", G=20, seed=2, outcome_counts=True))
    write_frame(table_frame(table), tmp_path / "data")
    loaded = load_aggregate(tmp_path / "data.csv")
    assert_array_equal(loaded.counts, table.counts)
    assert_array_equal(loaded.category_counts, table.category_counts)


def test_metadata_columns_are_dropped(tmp_path):
    table, _ = generate(ScenarioSpec(scenario="A", G=10, seed=2))
    path = write_frame(stamp(table_frame(table), 7, "deadbeef"), tmp_path / "data")
    assert {"seed", "config_hash"} <= set(pd.read_csv(path).columns)
    loaded = load_aggregate(path)
    assert loaded.covariate_names == []


def test_missing_file():
    with pytest.raises(InputFileError, match="not found"):
        load_aggregate("no/such/file.csv")


def test_non_numeric_cell_is_located(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("geo,x_a,x_b,n,y_v\ng1,0.5,0.5,10,0.3\ng2,0.4,oops,10,0.2\n", encoding="utf-8")
    with pytest.raises(DataValidationError, match="Row 1: column 'x_b'"):
        load_aggregate(path)


def test_single_share_column_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("geo,x_a,n,y_v\ng1,1.0,10,0.3\n", encoding="utf-8")
    with pytest.raises(DataValidationError, match="two share columns"):
        load_aggregate(path)


def test_share_tolerance_defaults_to_configured_value(tmp_path):
    path = tmp_path / "loose.csv"
    path.write_text("geo,x_a,x_b,n,y_v\ng1,0.40001,0.6,10,0.3\ng2,0.5,0.5,10,0.4\n", encoding="utf-8")
    assert load_aggregate.__defaults__ == (INGEST_TOLERANCE,)
    with pytest.raises(DataValidationError, match="not 1"):
        load_aggregate(path)
    assert load_aggregate(path, tolerance=1e-4).G == 2


def test_micro_with_named_categories(tmp_path):
    path = tmp_path / "micro.csv"
    path.write_text("geo,cat,y\nn1,red,1\nn1,blue,0\nn2,red,0\n", encoding="utf-8")
    micro = load_csv(path, "micro", ["red", "blue"])
    assert micro.categories == ["red", "blue"]
    assert_array_equal(micro.category, [0, 1, 0])
    with pytest.raises(DataValidationError, match="unknown category"):
        load_micro(path, ["red"])


def test_micro_out_of_range_index(tmp_path):
    path = tmp_path / "micro.csv"
    path.write_text("geo,cat,y_a,y_b\ng1,0,1,0\ng1,3,0,1\n", encoding="utf-8")
    with pytest.raises(DataValidationError):
        load_micro(path, 2)


def test_export_run_writes_stamped_tables(tmp_path):
    config = RunConfig(subcommand="simulate", options={"scenario": "A"}, seed=3, output_dir=tmp_path)
    written = export_run({"rows": [{"a": 1.5}, {"a": 2.5}]}, config, tmp_path)
    assert [p.name for p in written] == ["rows.csv", "run_config.json"]
    df = pd.read_csv(tmp_path / "rows.csv")
    assert list(df.columns) == ["a", "seed", "config_hash"]
    assert (df["config_hash"] == config.config_hash).all()
    record = json.loads((tmp_path / "run_config.json").read_text(encoding="utf-8"))
    assert record["config_hash"] == config.config_hash
    assert "output_dir" not in record
    assert not list(tmp_path.glob(".*"))


@pytest.mark.parametrize("fmt", ["json", "xlsx"])
def test_other_formats(tmp_path, fmt):
    df = pd.DataFrame({"a": [0.1, 0.2], "b": ["x", "y"]})
    path = write_frame(df, tmp_path / "out", fmt)
    assert path.suffix == f".{fmt}"
    back = pd.read_json(path) if fmt == "json" else pd.read_excel(path, sheet_name="Data")
    assert_allclose(back["a"].to_numpy(), [0.1, 0.2])
    assert list(back["b"]) == ["x", "y"]


def test_config_hash_ignores_output_dir(tmp_path):
    a = RunConfig(subcommand="bounds", seed=1, output_dir=tmp_path / "a")
    b = RunConfig(subcommand="bounds", seed=1, output_dir=tmp_path / "b")
    c = RunConfig(subcommand="bounds", seed=2, output_dir=tmp_path / "a")
    assert a.config_hash == b.config_hash != c.config_hash
    assert len(a.config_hash) == 16
