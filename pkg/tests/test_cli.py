import json
import subprocess
import sys

from click.testing import CliRunner

from horolab.cli import ExperimentConfig, main


def invoke(*args):
    return CliRunner().invoke(main, list(args))


def test_oracle_check_constant(tmp_path):
    res = invoke("run", "oracle-check", "--model", "constant", "--epsilon", "1.0", "--out", str(tmp_path))
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["results"]["passed"]
    assert rep["config"]["epsilon"] == 1.0
    assert {"version", "wall_time_s", "timestamp", "seeds"} <= set(rep["meta"])


def test_growth_csv(tmp_path):
    res = invoke("run", "cocycle-growth", "--model", "constant", "--p", "2", "--kmax", "8",
                 "--seed", "7", "--out", str(tmp_path))
    assert res.exit_code == 0, res.output
    raw = (tmp_path / "cocycle_series.csv").read_bytes()
    assert b"\r" not in raw
    lines = raw.decode("utf-8").strip("\n").split("\n")
    assert lines[0] == "k,norm_estimate,ci_low,ci_high,n_effective"
    assert len(lines) == 9
    assert [int(l.split(",")[0]) for l in lines[1:]] == list(range(1, 9))
    xy = (tmp_path / "cocycle_series.xy.csv").read_text().split("\n")
    assert xy[0] == "k,norm_estimate"
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["results"]["details"]["verdict"] == "increasing"


def test_malformed_json(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    out = tmp_path / "out"
    res = invoke("run", "riccati", "--config", str(cfg), "--out", str(out))
    assert res.exit_code == 2
    assert not out.exists()


def test_unknown_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "riccati", "colour": "red"}))
    out = tmp_path / "out"
    res = invoke("run", "riccati", "--config", str(cfg), "--out", str(out))
    assert res.exit_code == 2
    assert "colour" in res.output
    assert not out.exists()


def test_bad_model(tmp_path):
    res = invoke("run", "riccati", "--model", "sphere", "--out", str(tmp_path / "o"))
    assert res.exit_code == 2
    res = invoke("run", "riccati", "--model", '{"kind": "perturbed_axial", "a": 0.9}',
                 "--out", str(tmp_path / "o"))
    assert res.exit_code == 2
    assert not (tmp_path / "o").exists()


def test_unknown_experiment():
    assert invoke("run", "teleport").exit_code == 2


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "oracle-check", "epsilon": 0.5, "seed": 3}))
    res = invoke("run", "oracle-check", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "o"))
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["config"]["epsilon"] == 0.5
    assert rep["config"]["seed"] == 9


def test_defaults_echoed():
    c = ExperimentConfig(experiment="cocycle-growth", model="perturbed")
    assert c.model.kind == "perturbed_axial"
    assert (c.epsilon, c.p, c.translation_length) == (0.25, 8.0, 4.0)
    c = ExperimentConfig(experiment="cocycle-growth")
    assert (c.epsilon, c.p, c.translation_length) == (1.0, 2.0, 1.0)


def test_failing_metric_exit_1(tmp_path):
    res = invoke("run", "boundary-products", "--model", "constant", "--horizon", "2",
                 "--n-checks", "5", "--out", str(tmp_path))
    assert res.exit_code == 1
    assert "q_closed_form" in res.output
    rep = json.loads((tmp_path / "report.json").read_text())
    assert "q_closed_form" in rep["results"]["failing"]


def test_console_script(tmp_path):
    res = subprocess.run([sys.executable, "-m", "horolab.cli", "run", "holder", "--model", "constant",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "degenerate_flag" in res.stdout
