import json
import math

import numpy as np
import pytest

from platoon_hinf.cli import main
from platoon_hinf.ingest import TrajectoryRecord, read_trajectory_csv, write_trajectory_csv


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def config(tmp_path, name="cfg.json", **fields):
    base = {
        "name": "run",
        "topology": "test_a.json",
        "tau": 0.5,
        "gains": {"file": "paper_gains.json", "c": 0.668},
        "disturbance": {"type": "sine_pulse", "amplitude": 10.0},
        "horizon": 12.0,
        "dt": 0.001,
    }
    base.update(fields)
    p = tmp_path / name
    p.write_text(json.dumps(base))
    return p


def assert_single_line_error(err, kind):
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith(f"error[{kind}]: ")


class TestAnalyze:
    def test_test_a(self, capsys, data_dir):
        code, out, _ = run(capsys, "analyze", "--config", data_dir / "test_a.json")
        assert code == 0
        assert "lambda_min: 2.1\n" in out and "not satisfied" in out

    def test_strict(self, capsys, data_dir):
        code, _, err = run(capsys, "analyze", "--strict", "--config", data_dir / "test_a.json")
        assert code == 2
        assert_single_line_error(err, "disc_condition")

    def test_diagonal_demo(self, capsys, data_dir, tmp_path):
        code, out, _ = run(capsys, "analyze", "--config", data_dir / "diagonal_demo.json", "--out", tmp_path)
        assert code == 0 and "disc separation condition: satisfied" in out
        rep = json.loads((tmp_path / "analysis.json").read_text())
        assert rep["gamma_bound"]["cond_term"] == pytest.approx(1.0, abs=1e-12)

    def test_malformed(self, capsys, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"n": 2,\n  "edges": [,]}')
        code, _, err = run(capsys, "analyze", "--config", p)
        assert code == 1
        assert_single_line_error(err, "parse")
        assert "line 2" in err

    def test_invalid_field(self, capsys, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"n": 2, "edges": [], "self_weights": [1, 1], "pinning": [1, -1]}))
        code, _, err = run(capsys, "analyze", "--config", p)
        assert code == 1 and "pinning[2]" in err

    def test_complex_spectrum(self, capsys, tmp_path):
        p = tmp_path / "cycle.json"
        edges = [{"from": 1, "to": 2}, {"from": 2, "to": 3}, {"from": 3, "to": 1}]
        p.write_text(json.dumps({"n": 3, "edges": edges, "self_weights": [1, 1, 1], "pinning": [1, 1, 1]}))
        code, _, err = run(capsys, "analyze", "--config", p)
        assert code == 2
        assert_single_line_error(err, "disc_condition")

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "analyze", "--config", tmp_path / "nope.json")
        assert code == 1
        assert_single_line_error(err, "io")


class TestSynthesize:
    def test_synthesis(self, capsys, data_dir, tmp_path):
        code, out, _ = run(capsys, "synthesize", "--config", data_dir / "experiment_synthesize_a.json", "--out", tmp_path)
        assert code == 0
        ctl = json.loads((tmp_path / "controller.json").read_text())
        assert ctl["c"] == pytest.approx(math.sqrt(ctl["alpha"]) / ctl["lambda_min"], rel=1e-12)
        assert ctl["lambda_min"] == pytest.approx(2.1, abs=1e-9)
        assert ctl["verification"]["passed"] and ctl["verification"]["gamma"] < 1.0
        assert {"tau", "gamma_d", "k", "alpha", "lambda_min", "c", "margin"} <= set(ctl)

    def test_infeasible(self, capsys, data_dir, tmp_path):
        code, _, err = run(capsys, "synthesize", "--config", data_dir / "experiment_synthesize_a.json",
                           "--out", tmp_path, "--gamma-d", "1e-9")
        assert code == 3
        assert_single_line_error(err, "infeasible")
        assert "best margin" in err

    def test_explicit_gains_verify_only(self, capsys, data_dir, tmp_path):
        code, _, _ = run(capsys, "synthesize", "--config", data_dir / "experiment_test_a.json", "--out", tmp_path)
        assert code == 0
        ctl = json.loads((tmp_path / "controller.json").read_text())
        assert ctl["synthesized"] is False and ctl["k"] == [2.122, 3.425, 2.501]
        assert ctl["verification"]["passed"]

    def test_two_gain_sources(self, capsys, tmp_path):
        p = config(tmp_path, gains={"k": [1, 2, 3], "synthesize": True})
        code, _, err = run(capsys, "synthesize", "--config", p, "--out", tmp_path)
        assert code == 1
        assert_single_line_error(err, "config")


class TestSimulate:
    def test_experiment_a(self, capsys, data_dir, tmp_path):
        code, _, _ = run(capsys, "simulate", "--config", data_dir / "experiment_test_a.json", "--out", tmp_path)
        assert code == 0
        s = json.loads((tmp_path / "summary.json").read_text())
        assert s["l2_gain"] == pytest.approx(0.4501, rel=0.10)
        header = (tmp_path / "trace.csv").read_text().splitlines()[0]
        assert header.startswith("t,w_1,") and header.endswith("spacing_8")

    def test_deterministic(self, capsys, tmp_path):
        p = config(tmp_path)
        for d in ("a", "b"):
            assert run(capsys, "simulate", "--config", p, "--out", tmp_path / d)[0] == 0
        for f in ("trace.csv", "summary.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_zero_disturbance(self, capsys, tmp_path):
        p = config(tmp_path, disturbance={"type": "zero"}, horizon=2.0)
        assert run(capsys, "simulate", "--config", p, "--out", tmp_path)[0] == 0
        table = np.loadtxt(tmp_path / "trace.csv", delimiter=",", skiprows=1)
        assert np.all(table[:, 1:] == 0.0)
        assert json.loads((tmp_path / "summary.json").read_text())["l2_gain"] is None

    def test_linearity(self, capsys, tmp_path):
        peaks = []
        for q in (10.0, 30.0):
            p = config(tmp_path, name=f"q{q:g}.json", disturbance={"type": "sine_pulse", "amplitude": q})
            assert run(capsys, "simulate", "--config", p, "--out", tmp_path / f"q{q:g}")[0] == 0
            peaks.append(json.loads((tmp_path / f"q{q:g}" / "summary.json").read_text())["peak_spacing_error"])
        assert peaks[1] == pytest.approx(3 * peaks[0], rel=1e-12)

    def test_overrides(self, capsys, tmp_path):
        p = config(tmp_path)
        assert run(capsys, "simulate", "--config", p, "--out", tmp_path, "--horizon", "1", "--dt", "0.01")[0] == 0
        s = json.loads((tmp_path / "summary.json").read_text())
        assert s["horizon"] == pytest.approx(1.0) and s["dt"] == 0.01

    def test_bad_dt(self, capsys, tmp_path):
        code, _, err = run(capsys, "simulate", "--config", config(tmp_path), "--out", tmp_path, "--dt", "-1")
        assert code == 1
        assert_single_line_error(err, "config")

    def test_divergence_exit_code(self, capsys, tmp_path):
        p = config(tmp_path, gains={"k": [-50, -50, -50], "c": 1.0}, dt=0.01, horizon=30.0)
        code, _, err = run(capsys, "simulate", "--config", p, "--out", tmp_path)
        assert code == 4
        assert_single_line_error(err, "numerical")


class TestIngest:
    def test_affine_and_constant(self, capsys, tmp_path):
        t = np.round(np.arange(0, 60.0001, 0.1), 10)
        recs = [TrajectoryRecord(float(x), 20.0 * x + 3.0, 20.0, 0.0) for x in t]
        write_trajectory_csv(tmp_path / "in.csv", recs)
        code, _, _ = run(capsys, "ingest", "--input", tmp_path / "in.csv", "--out", tmp_path / "o")
        assert code == 0
        sm = read_trajectory_csv(tmp_path / "o" / "smoothed.csv")
        assert max(abs(a.position - b.position) for a, b in zip(sm, recs)) < 1e-10
        assert max(abs(a.velocity - 20.0) for a in sm) < 1e-10
        assert (tmp_path / "o" / "smoothed.csv").read_text().startswith("# smoothed: true\n")
        lead = np.loadtxt(tmp_path / "o" / "leader.csv", delimiter=",", skiprows=2)
        assert np.abs(lead[:, 2] - 20.0).max() < 1e-9

    def test_roundtrip(self, capsys, tmp_path):
        code, _, _ = run(capsys, "ingest", "--out", tmp_path / "a", "--seed", "3")
        assert code == 0
        first = read_trajectory_csv(tmp_path / "a" / "smoothed.csv")
        write_trajectory_csv(tmp_path / "copy.csv", first, smoothed=True)
        assert (tmp_path / "copy.csv").read_bytes() == (tmp_path / "a" / "smoothed.csv").read_bytes()

    def test_missing_column(self, capsys, tmp_path):
        (tmp_path / "in.csv").write_text("time,position,acceleration\n0,0,0\n1,1,0\n2,2,0\n")
        code, _, err = run(capsys, "ingest", "--input", tmp_path / "in.csv", "--out", tmp_path)
        assert code == 1
        assert_single_line_error(err, "io")
        assert "velocity" in err

    def test_bad_span(self, capsys, tmp_path):
        code, _, err = run(capsys, "ingest", "--out", tmp_path, "--span", "0.0001")
        assert code == 1 and "span" in err


class TestReport:
    def test_two_rows(self, capsys, data_dir, tmp_path):
        for name in ("a", "b"):
            cfg = data_dir / f"experiment_test_{name}.json"
            assert run(capsys, "simulate", "--config", cfg, "--out", tmp_path / name)[0] == 0
        code, out, _ = run(capsys, "report", tmp_path)
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 3 and lines[0].split()[:3] == ["test", "tau", "gamma_d"]
        assert lines[1].split()[0] == "test_a" and "2.1" in lines[1].split()
        assert "0.6680" in lines[1]

    def test_empty(self, capsys, tmp_path):
        code, _, err = run(capsys, "report", tmp_path)
        assert code == 1
        assert_single_line_error(err, "io")

    def test_mixed(self, capsys, tmp_path):
        assert run(capsys, "simulate", "--config", config(tmp_path), "--out", tmp_path / "good")[0] == 0
        (tmp_path / "empty_run").mkdir()
        (tmp_path / "partial").mkdir()
        (tmp_path / "partial" / "summary.json").write_text(json.dumps({"name": "partial", "tau": 0.5}))
        code, out, err = run(capsys, "report", tmp_path)
        assert code == 0
        assert len(out.strip().splitlines()) == 2
        assert err.count("warning:") == 2
