import csv
import json

import pytest
import yaml

from gdnls.cli import RunConfig, main, parse_config
from gdnls.dynamics import ConfigurationError


def run(tmp_path, *args):
    return main(list(args) + ["--out", str(tmp_path)])


def test_config_round_trip():
    cfg = RunConfig(sigma=1.5, epsilon=0.125, sweep_sigma=[1.5, 2.0])
    text = cfg.to_yaml()
    again = parse_config(text)
    assert again == cfg
    assert again.to_yaml() == text


def test_config_errors_name_the_field():
    with pytest.raises(ConfigurationError, match="config.init_kind"):
        parse_config("init_kind: wave\n")
    with pytest.raises(ConfigurationError, match="config.record_every"):
        parse_config("record_every: many\n")
    with pytest.raises(ConfigurationError, match="config.epsilon"):
        parse_config("epsilon: 0.001\nmax_mode: 16\n")


def test_run_plane_wave(tmp_path, capsys):
    rc = run(tmp_path, "run", "--set", "init_kind=plane_wave", "--set", "init_amplitude=1",
             "--set", "init_n=1", "--set", "t_end=0.05")
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "diagnostics.csv")))
    l2 = [float(r["l2"]) for r in rows]
    assert max(l2) - min(l2) <= 1e-8 * l2[0]
    assert json.loads((tmp_path / "final.json").read_text())["schema_version"] == 1
    assert "mass_drift" in capsys.readouterr().out


def test_run_zero_data(tmp_path):
    assert run(tmp_path, "run", "--set", "init_kind=plane_wave", "--set", "init_amplitude=0",
               "--set", "t_end=0.01") == 0
    for row in csv.DictReader(open(tmp_path / "diagnostics.csv")):
        assert all(float(v) == 0 for k, v in row.items() if k != "t")


def test_run_is_byte_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["run", "--set", "t_end=0.02", "--seed", "11"]
    assert run(a, *args) == 0
    assert main(["run", "--config", str(a / "config.yaml"), "--out", str(b)]) == 0
    assert (a / "diagnostics.csv").read_bytes() == (b / "diagnostics.csv").read_bytes()


def test_file_initial_data(tmp_path):
    assert run(tmp_path / "a", "run", "--set", "t_end=0.01") == 0
    path = tmp_path / "a" / "final.json"
    assert run(tmp_path / "b", "run", "--set", "init_kind=file", "--set", f"init_path={path}",
               "--set", "t_end=0.01") == 0


def test_precedence(tmp_path):
    conf = tmp_path / "c.yaml"
    conf.write_text("sigma: 3.0\nt_end: 0.01\n")
    assert run(tmp_path, "run", "--config", str(conf), "--set", "sigma=1.5") == 0
    assert yaml.safe_load((tmp_path / "config.yaml").read_text())["sigma"] == 1.5


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("GDNLS_OUT", str(tmp_path / "env"))
    assert main(["run", "--set", "t_end=0.01"]) == 0
    assert (tmp_path / "env" / "diagnostics.csv").exists()


def test_usage_errors(tmp_path):
    assert run(tmp_path, "run", "--set", "sigma=0.5") == 2
    assert run(tmp_path, "run", "--set", "nosuchkey=1") == 2
    assert run(tmp_path, "run", "--config", str(tmp_path / "missing.yaml")) == 2
    assert run(tmp_path, "probe", "nosuchprobe") == 2
    assert main(["frobnicate"]) == 2


def test_overflow_exit_code(tmp_path):
    rc = run(tmp_path, "run", "--set", "init_kind=plane_wave", "--set", "init_amplitude=1e80",
             "--set", "init_n=3", "--set", "epsilon=null", "--set", "t_end=0.01",
             "--set", "record_every=1", "--set", "h1_blowup_threshold=1e300",
             "--set", "h2_alarm_threshold=1e300")
    assert rc == 3


def test_probe_cutoff_props(tmp_path):
    assert run(tmp_path, "probe", "cutoff_props", "--set", "samples=50") == 0
    doc = json.loads((tmp_path / "probe_cutoff_props.json").read_text())
    assert doc["verdict"] == "pass" and doc["schema_version"] == 1
    assert {"probe_id", "seed", "samples", "residual_stats", "estimated_constants", "config"} <= set(doc)


def test_probe_cancellation_pass_and_fail(tmp_path):
    assert run(tmp_path, "probe", "cancellation") == 0
    assert run(tmp_path, "probe", "cancellation", "--set", "alpha=0", "--set", "beta=0") == 1
    c = json.loads((tmp_path / "probe_cancellation.json").read_text())["estimated_constants"]
    assert c["B1_coef[a=0,b=0]"] == pytest.approx(-4, abs=0.2)
    assert c["B2_coef[a=0,b=0]"] == pytest.approx(-2, abs=0.2)


def test_converge(tmp_path):
    assert run(tmp_path, "converge", "--set", "init_kind=gaussian_bump", "--set",
               "init_amplitude=1", "--set", "t_end=0.1", "--threads", "3") == 0
    doc = json.loads((tmp_path / "convergence.json").read_text())
    assert doc["schema_version"] == 1 and doc["cauchy"]
    assert {"d_l2", "d_h1"} <= set(doc["pairs"][0])


def test_sweep(tmp_path):
    rc = run(tmp_path, "sweep", "--set", "t_end=0.01", "--set", "sweep_sigma=[1.5,2,3]",
             "--set", "sweep_amplitude=[0.05,0.1]", "--threads", "2")
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert len(rows) == 6
    assert all(r["termination"] == "completed" for r in rows)
    assert all(float(r["max_h1"]) < 0.2 for r in rows)


def test_one_point_sweep_matches_run(tmp_path):
    assert run(tmp_path / "s", "sweep", "--set", "t_end=0.02") == 0
    assert run(tmp_path / "r", "run", "--set", "t_end=0.02") == 0
    (row,) = list(csv.DictReader(open(tmp_path / "s" / "sweep.csv")))
    diag = list(csv.DictReader(open(tmp_path / "r" / "diagnostics.csv")))
    assert float(row["max_h1"]) == max(float(d["h1"]) for d in diag)
