import json
import os

import pytest

from gridshield.cli import main
from gridshield.topology import bundled_scenario


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


@pytest.fixture(autouse=True)
def fixed_env(monkeypatch):
    monkeypatch.delenv("GRIDSHIELD_SEED", raising=False)


class TestRun:
    def test_scaling_scenario_milestones(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["run", bundled_scenario("attack_scaling"),
                     "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["attack_onset"] == pytest.approx(0.10)
        assert summary["isolation"] == pytest.approx(0.14)
        assert summary["bess_pickup"] == pytest.approx(0.16)
        assert summary["handover"] == pytest.approx(0.25)
        assert summary["flags_raised"] == 1
        milestones = [summary["attack_onset"], summary["isolation"],
                      summary["bess_pickup"], summary["handover"]]
        assert milestones == sorted(milestones)
        assert (out / "timeseries.csv").exists()
        assert (out / "events.log").exists()
        assert (out / "summary.txt").exists()

    def test_csv_header_versioned(self, tmp_path):
        out = tmp_path / "out"
        main(["run", bundled_scenario("canadian_urban"), "--out", str(out),
              "--override", "sim.duration=0.1"])
        lines = (out / "timeseries.csv").read_text().splitlines()
        assert lines[0] == "# gridshield-csv v1"
        assert lines[1].startswith("t,agent0_v_pu,")

    def test_duration_override_ten_steps(self, tmp_path):
        out = tmp_path / "out"
        code = main(["run", bundled_scenario("canadian_urban"),
                     "--out", str(out), "--override", "sim.duration=0.001"])
        assert code == 0
        rows = (out / "timeseries.csv").read_text().splitlines()[2:]
        assert len(rows) == 1

    def test_missing_scenario_usage_error(self, tmp_path, capsys):
        out = tmp_path / "nothing"
        code = main(["run", str(tmp_path / "no.scn"), "--out", str(out)])
        assert code == 2
        assert not out.exists()

    def test_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["run", bundled_scenario("attack_additive"),
                         "--out", str(out)]) == 0
        assert read(a / "timeseries.csv") == read(b / "timeseries.csv")
        assert read(a / "events.log") == read(b / "events.log")
        assert read(a / "summary.json") == read(b / "summary.json")

    def test_env_seed_changes_output(self, tmp_path, monkeypatch):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["run", bundled_scenario("canadian_urban"), "--out", str(a),
              "--override", "sim.duration=0.1"])
        monkeypatch.setenv("GRIDSHIELD_SEED", "5")
        main(["run", bundled_scenario("canadian_urban"), "--out", str(b),
              "--override", "sim.duration=0.1"])
        # Truth columns identical; events/baselines may differ via noise.
        assert read(a / "timeseries.csv") == read(b / "timeseries.csv")

    def test_divergence_exit_code(self, tmp_path):
        code = main(["run", bundled_scenario("attack_scaling"),
                     "--out", str(tmp_path / "o"),
                     "--override", "attacks.attack1.kind=additive",
                     "--override", "attacks.attack1.channel=mod",
                     "--override", "attacks.attack1.magnitude=1e306"])
        assert code == 4

    def test_unservable_deficit_exit_code(self, tmp_path):
        # Drain the battery budget: demand can never be carried, and the
        # single 2 MW island load is critical by construction (max weight).
        code = main(["run", bundled_scenario("attack_scaling"),
                     "--out", str(tmp_path / "o"),
                     "--override", "bess.p_max_mw=0.5"])
        assert code == 5


class TestSweepCommand:
    def test_degenerate_grid(self, tmp_path):
        out = tmp_path / "hm.csv"
        code = main(["sweep", bundled_scenario("sweep_base"),
                     "--additive", "0:0:1", "--scaling", "1:1:1",
                     "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "# gridshield-csv v1"
        assert lines[1] == "a_a,scale_factor,dV_pu,df_hz,diverged"
        assert len(lines) == 3
        a_a, factor, dv, df, div = lines[2].split(",")
        assert float(dv) < 1e-3 and float(df) < 1e-3 and div == "0"

    def test_grid_row_count(self, tmp_path):
        out = tmp_path / "hm.csv"
        code = main(["sweep", bundled_scenario("sweep_base"),
                     "--additive", "0:0.02:3", "--scaling", "0.99:1.01:3",
                     "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 2 + 9

    def test_null_point_added_if_absent(self, tmp_path):
        out = tmp_path / "hm.csv"
        main(["sweep", bundled_scenario("sweep_base"),
              "--additive", "0.01:0.02:2", "--scaling", "1.01:1.02:2",
              "--out", str(out)])
        rows = [l.split(",") for l in out.read_text().splitlines()[2:]]
        assert any(float(r[0]) == 0.0 and float(r[1]) == 1.0 for r in rows)

    def test_malformed_range(self, tmp_path):
        code = main(["sweep", bundled_scenario("sweep_base"),
                     "--additive", "nope", "--scaling", "1:1:1",
                     "--out", str(tmp_path / "x.csv")])
        assert code == 2

    def test_jobs_byte_identical(self, tmp_path):
        outs = []
        for jobs, name in (("1", "a.csv"), ("3", "b.csv")):
            path = tmp_path / name
            assert main(["sweep", bundled_scenario("sweep_base"),
                         "--additive", "0:0.02:2", "--scaling", "1:1.02:2",
                         "--out", str(path), "--jobs", jobs]) == 0
            outs.append(read(path))
        assert outs[0] == outs[1]


class TestCalibrateCommand:
    def test_writes_deterministic_baseline(self, tmp_path):
        f1, f2 = tmp_path / "b1.json", tmp_path / "b2.json"
        for f in (f1, f2):
            assert main(["calibrate", bundled_scenario("canadian_urban"),
                         "--out", str(f)]) == 0
        assert read(f1) == read(f2)
        payload = json.loads(f1.read_text())
        assert payload["format"] == "gridshield-baseline v1"
        assert len(payload["agents"]) == 4

    def test_baseline_feeds_run_without_flags(self, tmp_path):
        base = tmp_path / "base.json"
        main(["calibrate", bundled_scenario("canadian_urban"),
              "--out", str(base)])
        out = tmp_path / "out"
        code = main(["run", bundled_scenario("canadian_urban"),
                     "--out", str(out), "--baseline", str(base)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["flags_raised"] == 0

    def test_calibrated_baseline_still_detects(self, tmp_path):
        base = tmp_path / "base.json"
        main(["calibrate", bundled_scenario("canadian_urban"),
              "--out", str(base)])
        out = tmp_path / "out"
        code = main(["run", bundled_scenario("attack_scaling"),
                     "--out", str(out), "--baseline", str(base)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["flags_raised"] == 1
        assert summary["isolation"] == pytest.approx(0.14)
