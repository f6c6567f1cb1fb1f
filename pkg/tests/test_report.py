import csv
import json

import pytest

from slab.config import ExperimentConfig
from slab.report import SCAN_COLUMNS, RunResult, emit_report, write_csv
from slab.scaling import fit_scaling


def _scan():
    hs = [0.5, 0.25, 0.125, 0.0625]
    return fit_scaling("demo", hs, [h**-1 for h in hs], predicted=-1.0, tol=0.25, ks=[1, 2, 3, 4])


def test_empty_csv_has_header(tmp_path):
    write_csv(tmp_path / "e.csv", SCAN_COLUMNS, [])
    assert (tmp_path / "e.csv").read_text() == ",".join(SCAN_COLUMNS) + "\n"


def test_emit_report_files(tmp_path):
    res = RunResult("demo")
    res.add_scan("scan", _scan())
    res.check("small", 1e-12, 1e-10)
    summary = emit_report(res, tmp_path / "out", ExperimentConfig(), wall_time=1.5)
    out = tmp_path / "out"
    rows = list(csv.DictReader((out / "scan.csv").open()))
    assert [r["k"] for r in rows] == ["1", "2", "3", "4"]
    assert float(rows[0]["fitted_slope"]) == pytest.approx(-1.0)
    assert len((out / "scan.tsv").read_text().splitlines()) == 4
    data = json.loads((out / "summary.json").read_text())
    assert data == summary
    assert data["passed"] is True
    assert data["verdicts"]["scan"]["predicted"] == -1.0
    assert data["verdicts"]["small"]["predicted"] == 1e-10
    assert data["config_hash"] == ExperimentConfig().hash
    assert (out / "config.ini").read_text() == ExperimentConfig().render()


def test_failed_verdict(tmp_path):
    res = RunResult("demo")
    assert not res.check("big", 2.0, 1.0)
    assert not res.passed
    assert emit_report(res, tmp_path)["passed"] is False


def test_nonfinite_values_become_null(tmp_path):
    res = RunResult("demo")
    res.extra["bad"] = float("nan")
    data = emit_report(res, tmp_path)
    assert data["extra"]["bad"] is None
    json.loads((tmp_path / "summary.json").read_text())


def test_unwritable_output(tmp_path):
    (tmp_path / "file").write_text("x")
    with pytest.raises(OSError):
        emit_report(RunResult("demo"), tmp_path / "file" / "sub")
