import json
import math

import numpy as np
import pytest

from cmalab.cli import REGISTRY, ExperimentConfig, emit_report, main, parse_value
from cmalab.domains import GridField, PlanarGrid, RadialBall, RadialProfile
from cmalab.exceptions import ParameterError, ShapeMismatchError, UsageError
from cmalab.io import dump_json, read_field, read_profile, records_csv, records_jsonl, write
from cmalab.lab import EstimateRecord


def rec(name, ok, n=1, est=1.0):
    return EstimateRecord(name=name, params={"n": n}, estimate=est, family="", resolutions=(8,),
                          extrapolated=est, verdict=ok)


class TestSerialization:
    def test_profile_roundtrip(self, tmp_path):
        ball = RadialBall.geometric(2, 1.5, 101)
        u = RadialProfile.from_function(ball, lambda r: np.sin(r) - np.sin(2.25))
        path = write(u, tmp_path / "u.csv")
        v = read_profile(path)
        assert np.array_equal(v.v, u.v) and np.array_equal(v.ball.rho_grid, ball.rho_grid)
        header = json.loads((tmp_path / "u.json").read_text())
        assert header["n"] == 2 and header["grid_length"] == 101

    def test_field_roundtrip(self, tmp_path):
        grid = PlanarGrid.disc(24)
        f = GridField.from_function(grid, lambda x, y: np.exp(x) * np.cos(y))
        path = write(f, tmp_path / "f.csv")
        g = read_field(path, grid)
        assert np.array_equal(g.values[grid.mask], f.values[grid.mask])

    def test_checksum_mismatch(self, tmp_path):
        f = GridField.from_function(PlanarGrid.disc(24), lambda x, y: x)
        path = write(f, tmp_path / "f.csv")
        with pytest.raises(ShapeMismatchError):
            read_field(path, PlanarGrid.unit_square(23))

    def test_unknown_object(self, tmp_path):
        with pytest.raises(ParameterError):
            write([1, 2], tmp_path / "x.csv")

    def test_json_stable(self):
        assert dump_json({"b": 1, "a": [0.1]}) == dump_json({"a": [0.1], "b": 1})

    def test_records_tables(self):
        rs = [rec("a", True), rec("b", False)]
        lines = records_jsonl(rs).splitlines()
        assert [json.loads(x)["name"] for x in lines] == ["a", "b"]
        csv_text = records_csv(rs)
        assert csv_text.splitlines()[0].startswith("name,params,estimate")
        assert ",fail," in csv_text


class TestConfig:
    def test_parse_values(self):
        assert parse_value("3") == 3 and parse_value("0.5") == 0.5
        assert parse_value("true") is True and parse_value("257, 513") == [257, 513]
        assert parse_value("planar") == "planar"

    def test_from_text(self):
        cfg = ExperimentConfig.from_text("experiment = mt-alpha  # comment\nn = 2\nresolutions = 4, 8\nL_step = 5\n")
        assert cfg.n == 2 and cfg.resolutions == (4, 8) and cfg.params == {"L_step": 5}

    @pytest.mark.parametrize("text", [
        "experiment = nope", "experiment = mt-alpha\nn = 7", "experiment = mt-alpha\nresolutions = 8, 4",
        "experiment = mt-alpha\nbackend = cubic", "n = 1", "experiment = mt-alpha\ngarbage",
    ])
    def test_invalid(self, text):
        with pytest.raises(UsageError):
            ExperimentConfig.from_text(text)

    def test_override(self):
        cfg = ExperimentConfig.from_text("experiment = mt-alpha", experiment="weak-bm", out="x")
        assert cfg.experiment == "weak-bm" and cfg.out == "x"


class TestReport:
    def test_single_record(self):
        text, obj, failures = emit_report([rec("mt-alpha", True)])
        assert failures == 0 and len(obj["records"]) == 1
        assert "1 records, 0 failed" in text and "kappa" in text

    def test_mixed_verdicts(self):
        _, obj, failures = emit_report([rec("z", True), rec("a", False, n=2), rec("m", False)])
        assert failures == 2
        assert [r["name"] for r in obj["records"]] == ["a", "m", "z"]
        assert set(obj["conventions"]) == {"1", "2"}

    def test_empty(self):
        text, obj, failures = emit_report([])
        assert failures == 0 and obj["records"] == [] and "empty" in text


class TestMain:
    def test_list(self, capsys):
        assert main(["list"]) == 0
        out = capsys.readouterr().out
        assert all(name in out for name in REGISTRY)

    def test_unknown_experiment(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = unknown\n")
        assert main(["run", str(cfg)]) == 2

    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "missing.cfg")]) == 2

    def test_bad_args(self):
        assert main(["frobnicate"]) == 2

    def test_invalid_parameter(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = mt-alpha\nbackend = planar\n")
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_run_mt_alpha(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = mt-alpha\nn = 1\n")
        out = tmp_path / "out"
        assert main(["run", str(cfg), "--out", str(out)]) == 0
        report = json.loads((out / "mt-alpha-n1-radial.report.json").read_text())
        lo, hi = report["records"][0]["bracket"]
        assert lo <= 2 * math.pi <= hi
        for suffix in ("records.jsonl", "summary.csv", "summary.txt"):
            assert (out / f"mt-alpha-n1-radial.{suffix}").exists()

    def test_failing_run_exit_code(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = radial-roundtrip\nn = 1\nresolutions = 64\ntol = 1e-30\n")
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_trace_written(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = descent-flow\nn = 1\nresolutions = 129\nsteps = 50\n")
        out = tmp_path / "o"
        main(["run", str(cfg), "--out", str(out)])
        trace = (out / "descent-flow-n1-radial.descent-flow.trace.csv").read_text().splitlines()
        assert trace[0] == "step,t,dt,functional,residual,seminorm,mass"
        assert len(trace) > 10


def test_deterministic_artifacts(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("experiment = energy-consistency\nn = 2\nresolutions = 257\ncount = 5\nseed = 7\n")
    blobs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        main(["run", str(cfg), "--out", str(out)])
        blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert blobs[0] == blobs[1]
