import csv
import io
import json
import math

import numpy as np
import pytest

from conftest import config_path
from semiflat.config import load_config
from semiflat.pipeline import run_check_section, run_verify
from semiflat.report import REPORT_FIELDS, dumps, emit_report, fmt_float, load_report, report_dict


@pytest.fixture(scope="module")
def line_report():
    return run_verify(load_config(config_path("line_lse.cfg")))


def test_fmt_float_round_trips():
    rng = np.random.default_rng(0)
    for x in rng.standard_normal(200) * 10.0 ** rng.integers(-300, 300, 200):
        assert float(fmt_float(float(x))) == x
    assert fmt_float(float("nan")) == "NaN"
    assert fmt_float(-math.inf) == "-Infinity"


def test_json_round_trip_bit_exact(line_report, tmp_path):
    path = tmp_path / "r.json"
    emit_report(line_report, "json", path)
    back = load_report(path)
    assert list(back)[: len(REPORT_FIELDS)] == list(REPORT_FIELDS)
    for key in ("lagrangian_residual", "f02_residual"):
        assert back["row2"][key] == line_report.row2[key]
    for key in ("slag_residual", "dhym_residual", "factorization_gap", "theta0"):
        assert back["row3"][key] == line_report.row3[key]
    assert np.array_equal(np.array(back["table"]["rows"]), line_report.table.rows())
    assert back == report_dict(line_report)


def test_json_is_stable(line_report):
    assert emit_report(line_report, "json") == emit_report(line_report, "json")


def test_nonfinite_tokens():
    text = dumps({"a": float("nan"), "b": [math.inf, 1.5]})
    back = json.loads(text)
    assert math.isnan(back["a"]) and back["b"] == [math.inf, 1.5]


def test_csv_table(line_report):
    text = emit_report(line_report, "csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["u1", "phase", "lag_res", "f02_res", "slag_res", "dhym_res"]
    data = np.array(rows[1:], dtype=float)
    assert np.array_equal(data, line_report.table.rows())


def test_csv_header_only_without_table():
    rep = run_check_section(load_config(config_path("slab_k2m3.cfg")))
    assert emit_report(rep, "csv") == "u1,u2,phase,lag_res,f02_res,slag_res,dhym_res\n"


def test_unknown_format(line_report):
    with pytest.raises(ValueError):
        emit_report(line_report, "xml")
