import csv
import json
import subprocess
import sys

import pytest

from degrade_opt.cli import main, run
from degrade_opt.instance import BUILTIN_NAMES

from conftest import tiny_dict


@pytest.fixture(autouse=True)
def _in_tmp(tmp_path, monkeypatch):
    # commands that default to --out . must not litter the checkout
    monkeypatch.chdir(tmp_path)


@pytest.fixture
def tiny_file(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(tiny_dict(demand=(25, 10), sigma=0.8)))
    return str(p)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_instances_list(capsys):
    assert main(["instances", "--list"]) == 0
    assert capsys.readouterr().out.split() == list(BUILTIN_NAMES)


def test_instances_validate(tmp_path, tiny_file, capsys):
    bad = tmp_path / "bad.json"
    d = tiny_dict()
    d["units"][0]["tau"] = 0
    bad.write_text(json.dumps(d))
    assert main(["instances", "--validate", tiny_file]) == 0
    assert main(["instances", "--validate", tiny_file, str(bad)]) == 3
    assert "tau" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["solve", "--alpha", "not-a-number"]) == 1


def test_validation_errors(tmp_path):
    assert main(["solve", "--alpha", "0.7", "--out", str(tmp_path)]) == 3
    assert main(["solve", "--scenario", "peak", "--out", str(tmp_path)]) == 3
    assert main(["solve", "--instance", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) in (1, 3)


def test_solver_failure_exit_code(tmp_path, tiny_file):
    code = main(["solve", "--instance", tiny_file, "--solver", "/nonexistent/cbc", "--out", str(tmp_path)])
    assert code == 2


def test_solve_writes_artifacts(tmp_path, tiny_file):
    code, report = run(["solve", "--instance", tiny_file, "--no-planning", "--mip-gap", "0",
                        "--out", str(tmp_path)])
    assert code == 0
    for name in ("model_summary.csv", "schedule.csv", "activities.csv", "gantt.svg", "report.json"):
        assert (tmp_path / name).exists(), name
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["summary"]["status"] == "optimal"
    assert rep["summary"]["objective"] == pytest.approx(140.0)


def test_config_file_overrides_flags(tmp_path, tiny_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no_planning": True, "mip-gap": 0.0, "alpha": 0.5}))
    code, report = run(["solve", "--instance", tiny_file, "--alpha", "0.2", "--config", str(cfg),
                        "--out", str(tmp_path)])
    assert code == 0
    assert report.config["alpha"] == 0.5
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["solve", "--instance", tiny_file, "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_pipeline(tmp_path, tiny_file):
    out = str(tmp_path)
    assert main(["roll", "--instance", tiny_file, "--periods", "2", "--mip-gap", "0", "--out", out]) == 0
    assert len(rows(tmp_path / "roll_iterations.csv")) == 2
    assert main(["simulate", "--instance", tiny_file, "--activities", str(tmp_path / "roll_activities.csv"),
                 "--paths", "500", "--out", out]) == 0
    pf = rows(tmp_path / "failure_probability.csv")
    assert [r["unit"] for r in pf] == ["U"]
    assert (tmp_path / "path_U_0.csv").exists()
    assert main(["gen-data", "--instance", tiny_file, "--samples", "4", "--out", out]) == 0
    assert len(rows(tmp_path / "training.csv")) == 4
    assert main(["fit", "--instance", tiny_file, "--data", str(tmp_path / "training.csv"), "--out", out]) == 0
    obs = tmp_path / "obs.csv"
    obs.write_text("alpha,unit,p_f\n0.5,U,0.2\n0.3,U,0.1\n")
    assert main(["estimate", "--instance", tiny_file, "--models", str(tmp_path / "models.json"),
                 "--alpha", "0.5", "--alpha", "0.3", "--periods", "2", "--samples", "3", "--paths", "200",
                 "--observed", str(obs), "--out", out]) == 0
    assert len(rows(tmp_path / "bounds.csv")) == 4
    assert {r["bound"] for r in rows(tmp_path / "metrics.csv")} == {"freq", "mc"}


def test_tune_random(tmp_path, tiny_file):
    code = main(["tune", "--instance", tiny_file, "--method", "random", "--budget", "2", "--periods", "1",
                 "--no-planning", "--paths", "200", "--out", str(tmp_path)])
    assert code == 0
    assert len(rows(tmp_path / "trace.csv")) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "degrade_opt.cli", "instances", "--list"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "toy" in proc.stdout
