import json

import numpy as np
import pandas as pd
import pytest

from hormander_lab.errors import InputError
from hormander_lab.reports import dumps, read_table, summary_lines, to_jsonable, write_report


def test_to_jsonable_converts_numpy_and_non_finite():
    raw = {"a": np.float64(np.inf), "b": [np.nan, -np.inf], "c": np.arange(3), "d": np.bool_(True), 1: np.int64(4)}
    assert to_jsonable(raw) == {"a": "inf", "b": ["nan", "-inf"], "c": [0, 1, 2], "d": True, "1": 4}


def test_dumps_sorts_keys():
    text = dumps({"b": 1, "a": {"d": 2.5, "c": None}})
    assert text.index('"a"') < text.index('"b"')
    assert text.index('"c"') < text.index('"d"')
    assert json.loads(text) == {"a": {"c": None, "d": 2.5}, "b": 1}


def test_report_to_stdout(capsys):
    assert write_report({"x": 1}, None) == []
    assert json.loads(capsys.readouterr().out) == {"x": 1}


def test_report_with_csv_tables(tmp_path):
    out = tmp_path / "run" / "report.json"
    written = write_report({"x": 1}, out, {"levels": [{"k": 0, "v": np.inf}], "empty": []})
    assert [p.name for p in written] == ["report.json", "report.levels.csv"]
    df = read_table(tmp_path / "run" / "report.levels.csv")
    assert np.isinf(float(df.loc[0, "v"]))


def test_report_with_workbook(tmp_path):
    out = tmp_path / "report.json"
    tables = {"a": [{"k": 0}, {"k": 1}], "b": [{"k": 2}]}
    written = write_report({"x": 1}, out, tables, "xlsx")
    assert written[-1].name == "report.tables.xlsx"
    assert sorted(read_table(written[-1])["k"].tolist()) == [0, 1, 2]


def test_bad_table_format(tmp_path):
    with pytest.raises(InputError):
        write_report({}, tmp_path / "r.json", table_format="parquet")


def test_read_table_missing(tmp_path):
    with pytest.raises(InputError):
        read_table(tmp_path / "nope.csv")


def test_read_table_csv(tmp_path):
    path = tmp_path / "t.csv"
    pd.DataFrame({"r": [0.1, 1.0]}).to_csv(path, index=False)
    assert read_table(path)["r"].tolist() == [0.1, 1.0]


def test_summary_lines():
    lines = summary_lines({"slope": 2.987654321, "exact": False}, ("slope", "exact"))
    assert lines == ["slope  2.98765", "exact  False"]
