import json
import pathlib
import subprocess
import sys

import pytest

from sockf import cli

REPO = pathlib.Path(__file__).resolve().parents[1]

SMALL_CONFIG = {
    "noise": {
        "c": 0.95,
        "base": {"dist": "gaussian", "mean": 0.1, "var": 10},
        "contaminant": {"dist": "uniform", "lo": -4, "hi": 2},
    },
    "filter": {"filter": "gmmee-srckf"},
    "tsga": {"population": 4, "max_iter": 2},
    "experiment": {
        "trace": {"kind": "urban_like", "duration": 20.0, "dt": 0.1, "amplitude": 3.0, "soc0": 0.9},
        "r": 10.0,
        "trials": 2,
    },
}


@pytest.fixture()
def cfg_path(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL_CONFIG))
    return str(path)


class TestCommands:
    def test_run(self, cfg_path, tmp_path, capsys):
        out = tmp_path / "rep.json"
        rc = cli.main(["run", "--config", cfg_path, "--seed", "3", "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["kind"] == "single"
        assert "rmse" in doc["report"]
        assert "rmse=" in capsys.readouterr().out

    def test_simulate_and_csv_source(self, cfg_path, tmp_path):
        trace = tmp_path / "trace.csv"
        rc = cli.main(["simulate", "--config", cfg_path, "--seed", "3", "--out", str(trace)])
        assert rc == 0
        assert trace.read_text().startswith("t_s,current_a,voltage_v,soc_true")

        csv_cfg = dict(SMALL_CONFIG)
        csv_cfg["experiment"] = dict(SMALL_CONFIG["experiment"])
        csv_cfg["experiment"]["trace"] = {"csv": str(trace)}
        cfg2 = tmp_path / "cfg2.json"
        cfg2.write_text(json.dumps(csv_cfg))
        out = tmp_path / "rep2.json"
        rc = cli.main(["run", "--config", str(cfg2), "--seed", "3", "--out", str(out)])
        assert rc == 0

    def test_compare(self, cfg_path, tmp_path):
        out = tmp_path / "cmp.json"
        rc = cli.main(["compare", "--config", cfg_path, "--seed", "3", "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert [r["variant"] for r in doc["rows"]] == list(cli.harness.COMPARISON_ORDER)

    def test_montecarlo(self, cfg_path, tmp_path):
        out = tmp_path / "mc.json"
        rc = cli.main(
            ["montecarlo", "--config", cfg_path, "--seed", "3", "--trials", "2", "--out", str(out)]
        )
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["summary"]["trials"] == 2

    def test_tune_uses_config_budget(self, cfg_path, tmp_path):
        out = tmp_path / "tune.json"
        rc = cli.main(["tune", "--config", cfg_path, "--seed", "3", "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert len(doc["tune"]["history"]) == 2

    def test_report_roundtrip(self, cfg_path, tmp_path):
        rep = tmp_path / "rep.json"
        cli.main(["run", "--config", cfg_path, "--seed", "3", "--out", str(rep)])
        out_csv = tmp_path / "rep.csv"
        rc = cli.main(["report", "--in", str(rep), "--format", "csv", "--out", str(out_csv)])
        assert rc == 0
        doc = json.loads(rep.read_text())
        row = out_csv.read_text().strip().splitlines()[1].split(",")
        assert float(row[3]) == pytest.approx(doc["report"]["rmse"], rel=1e-15)

    def test_filter_override(self, cfg_path, tmp_path):
        out = tmp_path / "rep.json"
        rc = cli.main(
            ["run", "--config", cfg_path, "--seed", "3", "--filter", "srckf", "--out", str(out)]
        )
        assert rc == 0
        assert json.loads(out.read_text())["report"]["variant"] == "srckf"


class TestExitCodes:
    def test_missing_config_file(self, tmp_path):
        rc = cli.main(["run", "--config", "/no/such.json", "--seed", "1", "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_bad_variant(self, cfg_path, tmp_path):
        rc = cli.main(
            ["run", "--config", cfg_path, "--seed", "1", "--filter", "ekf", "--out", str(tmp_path / "x")]
        )
        assert rc == 2

    def test_bad_csv_data(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t_s,current_a\n0,1\n")
        cfg = {"experiment": {"trace": {"csv": str(bad)}}}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        rc = cli.main(["run", "--config", str(cfg_path), "--seed", "1", "--out", str(tmp_path / "x")])
        assert rc == 3

    def test_numeric_breakdown(self, tmp_path):
        cfg = {
            "experiment": {
                "trace": {"kind": "constant", "duration": 5.0, "dt": 0.1, "amplitude": 1.0},
                "q": [[-1.0, 0, 0], [0, -1.0, 0], [0, 0, -1.0]],
            }
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        rc = cli.main(["run", "--config", str(cfg_path), "--seed", "1", "--out", str(tmp_path / "x")])
        assert rc == 4

    def test_seed_required(self, cfg_path, tmp_path):
        proc = subprocess.run(
            [
                sys.executable, "-m", "sockf.cli", "run",
                "--config", cfg_path, "--out", str(tmp_path / "x"),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
        assert "--seed" in proc.stderr

    def test_report_unreadable(self, tmp_path):
        rc = cli.main(["report", "--in", "/no/rep.json", "--format", "csv", "--out", str(tmp_path / "x")])
        assert rc == 3
