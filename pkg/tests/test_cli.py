import json
from pathlib import Path

import numpy as np
import pytest

from mssmpc.cli import EXIT_OK, EXIT_VALIDATION, RunConfig, main

from conftest import CONFIG_PATH


@pytest.fixture()
def small_cfg(tmp_path):
    """Benchmark config shrunk to a handful of runs for fast CLI checks."""
    doc = json.loads(Path(CONFIG_PATH).read_text())
    doc["experiment"]["num_runs"] = 3
    doc["experiment"]["steps"] = 3
    doc["output"]["directory"] = str(tmp_path / "out")
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path


class TestConfig:
    def test_roundtrip_identical_design(self, tmp_path):
        cfg = RunConfig.load(CONFIG_PATH)
        clone_path = tmp_path / "re.json"
        clone_path.write_text(cfg.dump())
        clone = RunConfig.load(clone_path)
        d1, _ = cfg.build()
        d2, _ = clone.build()
        for name in ("A", "B", "Gamma_w", "K", "P", "W_x", "W_u"):
            assert np.array_equal(getattr(d1, name), getattr(d2, name))
        for name in ("lam", "r_x", "r_u", "r_N", "rho", "nu", "mu", "N", "eps"):
            assert getattr(d1, name) == getattr(d2, name)

    def test_shape_validation(self, tmp_path):
        doc = json.loads(Path(CONFIG_PATH).read_text())
        doc["design"]["Q"] = [[1.0]]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(Exception):
            RunConfig.load(bad)


class TestCommands:
    def test_design_command(self, small_cfg, tmp_path, capsys):
        out = tmp_path / "design_out"
        code = main(["design", "--config", str(small_cfg), "--out", str(out)])
        assert code == EXIT_OK
        report = (out / "design_report.txt").read_text()
        assert "all checks passed" in report
        dump = json.loads((out / "design.json").read_text())
        assert dump["r_x"] == pytest.approx(12.1010, abs=1e-3)
        assert dump["rho"] == pytest.approx(2.1460, abs=1e-3)
        assert dump["nu"] == pytest.approx(16.0082, abs=1e-2)
        assert all(c["passed"] for c in dump["checks"])

    def test_design_rejects_bad_lambda(self, small_cfg, tmp_path):
        doc = json.loads(Path(small_cfg).read_text())
        doc["design"]["lambda"] = 0.3  # below the closed-loop spectral radius
        doc["design"]["W_x"] = None
        bad = tmp_path / "bad_lam.json"
        bad.write_text(json.dumps(doc))
        code = main(["design", "--config", str(bad), "--out", str(tmp_path / "o")])
        assert code == EXIT_VALIDATION

    def test_simulate_zero_noise_origin(self, small_cfg, tmp_path):
        doc = json.loads(Path(small_cfg).read_text())
        doc["system"]["Gamma_w"] = [[0.0, 0.0], [0.0, 0.0]]
        doc["experiment"]["x0"] = [0.0, 0.0]
        cfg = tmp_path / "zero.json"
        cfg.write_text(json.dumps(doc))
        out = tmp_path / "sim_out"
        code = main(["simulate", "--config", str(cfg), "--out", str(out)])
        assert code == EXIT_OK
        lines = (out / "trajectory.csv").read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header == ["k", "x0", "x1", "u0", "w0", "w1", "gamma_x", "gamma_u",
                          "delta_r", "basic_feasible", "in_Ex", "in_Eu", "in_X", "in_U"]
        for row in lines[1:]:
            vals = row.split(",")
            assert abs(float(vals[1])) <= 1e-9 and abs(float(vals[3])) <= 1e-9

    def test_simulate_strategy_behaviour(self, small_cfg, tmp_path):
        out_a = tmp_path / "a"
        code = main(["simulate", "--config", str(small_cfg), "--out", str(out_a),
                     "--strategy", "A"])
        assert code == EXIT_OK
        rows = (out_a / "trajectory.csv").read_text().strip().splitlines()[1:]
        first = rows[0].split(",")
        assert abs(float(first[3])) > 10.0       # u exceeds the input bound
        assert float(first[6]) >= 1.0 - 1e-9    # gamma_x
        out_b = tmp_path / "b"
        main(["simulate", "--config", str(small_cfg), "--out", str(out_b),
              "--strategy", "B"])
        first_b = (out_b / "trajectory.csv").read_text().strip().splitlines()[1].split(",")
        assert abs(float(first_b[3])) <= 10.0 + 1e-8
        assert (out_b / "trajectory.svg").exists()

    def test_montecarlo_single_run(self, small_cfg, tmp_path):
        doc = json.loads(Path(small_cfg).read_text())
        doc["experiment"]["num_runs"] = 1
        cfg = tmp_path / "one.json"
        cfg.write_text(json.dumps(doc))
        out = tmp_path / "mc_out"
        code = main(["montecarlo", "--config", str(cfg), "--out", str(out)])
        assert code == EXIT_OK
        lines = (out / "summary.csv").read_text().strip().splitlines()
        assert lines[0].split(",")[:5] == ["ell", "p_x", "p_u", "f_x", "f_u"]
        for row in lines[1:]:
            f_x, f_u = float(row.split(",")[3]), float(row.split(",")[4])
            assert f_x in (0.0, 1.0) and f_u in (0.0, 1.0)

    def test_byte_identical_reruns(self, small_cfg, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["montecarlo", "--config", str(small_cfg), "--out", str(out1)]) == EXIT_OK
        assert main(["montecarlo", "--config", str(small_cfg), "--out", str(out2)]) == EXIT_OK
        assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()
        assert (out1 / "costs.csv").read_bytes() == (out2 / "costs.csv").read_bytes()

    def test_compare_command(self, small_cfg, tmp_path):
        doc = json.loads(Path(small_cfg).read_text())
        doc["experiment"]["x0"] = [-30.0, 0.0]
        cfg = tmp_path / "cmp.json"
        cfg.write_text(json.dumps(doc))
        out = tmp_path / "cmp_out"
        code = main(["compare", "--config", str(cfg), "--out", str(out)])
        assert code == EXIT_OK
        lines = (out / "compare.csv").read_text().strip().splitlines()
        assert lines[0] == "cost_ms,cost_is"
        assert len(lines) == 4
        summary = (out / "compare_summary.txt").read_text()
        assert "ratio" in summary

    def test_table1_command(self, small_cfg, tmp_path):
        out = tmp_path / "t1"
        code = main(["table1", "--config", str(small_cfg), "--out", str(out)])
        assert code == EXIT_OK
        lines = (out / "table1.csv").read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[0] == "ell"
        for strat in ("A", "B", "C"):
            assert f"p_x_{strat}" in header and f"f_u_{strat}" in header
        assert len(lines) == 4  # three steps plus header
        costs = (out / "table1_costs.csv").read_text().strip().splitlines()
        assert costs[0] == "controller,cost"
        assert len(costs) == 1 + 3 * 3

    def test_missing_config_is_io_error(self, tmp_path):
        code = main(["design", "--config", str(tmp_path / "nope.json")])
        assert code == 4
