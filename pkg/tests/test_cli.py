import json
import subprocess
import sys

import pytest

from pluripot import cli


def _run(tmp_path, *args):
    return cli.main(["--output", str(tmp_path), *args])


def _report(path):
    return json.loads((path / "report.json").read_text())


def test_bounds_example(tmp_path):
    assert _run(tmp_path, "bounds", "--n", "1", "--p", "2", "--C", "1", "--alpha", "1", "--A", "1") == 0
    rep = _report(tmp_path)
    assert rep["results"]["M"] == pytest.approx(8.8937, abs=1e-4)
    assert len(rep["config_sha256"]) == 64 and rep["statement"]
    assert (tmp_path / "table.csv").exists() and (tmp_path / "plot.gp").exists()


def test_flat_trivial(tmp_path):
    assert _run(tmp_path, "solve", "--preset", "flat-trivial") == 0
    assert _report(tmp_path)["results"]["sup_abs_phi"] <= 1e-8


def test_usage_errors(tmp_path, capsys):
    assert cli.main(["nonsense"]) == 2
    assert cli.main([]) == 2
    assert _run(tmp_path, "solve", "--preset", "nope") == 2


def test_check_failure_lists_checks(tmp_path, capsys):
    code = _run(tmp_path, "family", "--kind", "collapsing", "--ladder", "0.2,0.1,0.05", "--resolution", "12")
    assert code == 1
    assert "final_below_tenth" in capsys.readouterr().err
    rep = _report(tmp_path)
    assert rep["failed"] == ["final_below_tenth"]
    assert rep["results"]["convergence"]["t"] == [0.2, 0.1, 0.05]


def test_config_file_and_flag_precedence(tmp_path):
    ini = tmp_path / "exp.ini"
    ini.write_text("[run]\nseed = 3\n[bounds]\nC = 2\nalpha = 1\n")
    out = tmp_path / "a"
    assert cli.main(["--config", str(ini), "--output", str(out), "bounds"]) == 0
    assert _report(out)["config"]["C"] == "2" and _report(out)["config"]["seed"] == "3"
    out2 = tmp_path / "b"
    assert cli.main(["--config", str(ini), "--output", str(out2), "bounds", "--C", "1"]) == 0
    assert _report(out2)["results"]["M"] == pytest.approx(8.8937, abs=1e-4)
    assert _report(out)["config_sha256"] != _report(out2)["config_sha256"]


def test_twelve_significant_digits(tmp_path):
    _run(tmp_path, "bounds")
    txt = (tmp_path / "report.json").read_text()
    assert '"M": 8.89365874281' in txt


def test_reports_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert _run(tmp_path / d, "green") == 0
    for name in ("report.json", "table.csv", "plot.gp"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "pluripot", "--output", str(tmp_path), "density"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert _report(tmp_path)["checks"]["closed_form"]
