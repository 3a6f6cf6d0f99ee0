"""Command line behaviour: golden outputs, exit codes, reproducible files.

Most tests drive cli.main() in-process so exit codes and streams are easy
to assert; one test runs the real `python -m fedcarbon` entry point.
"""

from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from fedcarbon.cli import main

from conftest import FIXTURES_DIR

CONFIGS = FIXTURES_DIR / "configs"
SCHEDULES = FIXTURES_DIR / "schedules"

FL_NOMINAL = str(CONFIGS / "fl_tx2_nominal_china.json")
FL_DEMO = str(CONFIGS / "fl_sim_small_france.json")
CEN_CIFAR = str(CONFIGS / "centralized_cifar10_world_france.json")
CEN_SPEECH_WORLD = str(CONFIGS / "centralized_speech_world_france.json")
CEN_SPEECH_GOOGLE = str(CONFIGS / "centralized_speech_google_france.json")
SCHED_16X5 = str(SCHEDULES / "tx2_nominal_16x5.json")
GRID_TABLE = str(FIXTURES_DIR / "cifar10_grid_results.json")


def run_cli(capsys, *argv: str) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestEstimate:
    def test_fixture_schedule_emission(self, capsys):
        code, out, _ = run_cli(capsys, "estimate", "--config", FL_NOMINAL,
                               "--fixtures", SCHED_16X5)
        assert code == 0
        report = json.loads(out)
        assert report["co2e_g"] == pytest.approx(11.132097777777778, rel=1e-12)
        assert report["grid_region"] == "china"
        assert report["communication_wh"] == 0.0

    def test_centralized_emission(self, capsys):
        code, out, _ = run_cli(capsys, "estimate", "--config", CEN_CIFAR)
        assert code == 0
        report = json.loads(out)
        assert report["co2e_g"] == pytest.approx(0.3553314666666667, rel=1e-12)
        assert report["mode"] == "centralized"

    def test_simulated_estimate_prices_executed_rounds(self, capsys):
        # the demo run stops early; the report must price what actually ran
        code, out, _ = run_cli(capsys, "estimate", "--config", FL_DEMO)
        assert code == 0
        report = json.loads(out)
        assert report["total_wh"] > 0
        assert report["comm_fraction"] > 0  # 357 Mb payload over the WAN

    def test_out_file_written_atomically(self, capsys, tmp_path):
        target = tmp_path / "report.json"
        code, out, _ = run_cli(capsys, "estimate", "--config", FL_NOMINAL,
                               "--fixtures", SCHED_16X5, "--out", str(target))
        assert code == 0 and out == ""
        assert json.loads(target.read_text())["co2e_g"] == pytest.approx(
            11.132097777777778, rel=1e-12)
        assert list(tmp_path.glob("*.tmp")) == []

    def test_reruns_are_byte_identical(self, capsys, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run_cli(capsys, "estimate", "--config", FL_DEMO, "--out", str(a))
        run_cli(capsys, "estimate", "--config", FL_DEMO, "--out", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_seed_override_changes_digest(self, capsys):
        _, out1, _ = run_cli(capsys, "estimate", "--config", FL_NOMINAL,
                             "--fixtures", SCHED_16X5)
        _, out2, _ = run_cli(capsys, "estimate", "--config", FL_NOMINAL,
                             "--fixtures", SCHED_16X5, "--seed", "99")
        d1 = json.loads(out1)
        d2 = json.loads(out2)
        assert d1["config_digest"] != d2["config_digest"]
        assert d1["co2e_g"] == d2["co2e_g"]  # the energy itself is seed-free


class TestSimulate:
    def test_writes_trace_and_schedule(self, capsys, tmp_path):
        base = tmp_path / "run"
        code, _, _ = run_cli(capsys, "simulate", "--config", FL_DEMO,
                             "--out", str(base))
        assert code == 0
        trace = (tmp_path / "run.csv").read_text()
        lines = trace.splitlines()
        assert lines[0].startswith("# config_digest=")
        assert lines[1] == "round,accuracy,cumulative_wh"
        assert len(lines) >= 3
        sched = json.loads((tmp_path / "run.schedule.json").read_text())
        assert sched["rounds"] == len(lines) - 2
        assert len(sched["participation"]) == sched["rounds"] * 5

    def test_reruns_are_byte_identical(self, capsys, tmp_path):
        run_cli(capsys, "simulate", "--config", FL_DEMO, "--out",
                str(tmp_path / "one"))
        run_cli(capsys, "simulate", "--config", FL_DEMO, "--out",
                str(tmp_path / "two"))
        assert (tmp_path / "one.csv").read_bytes() == \
            (tmp_path / "two.csv").read_bytes()
        assert (tmp_path / "one.schedule.json").read_bytes() == \
            (tmp_path / "two.schedule.json").read_bytes()

    def test_cumulative_energy_column_is_increasing(self, capsys, tmp_path):
        base = tmp_path / "run"
        run_cli(capsys, "simulate", "--config", FL_DEMO, "--out", str(base))
        rows = list(csv.DictReader(
            [ln for ln in (tmp_path / "run.csv").read_text().splitlines()
             if not ln.startswith("#")]))
        cum = [float(r["cumulative_wh"]) for r in rows]
        assert all(b > a for a, b in zip(cum, cum[1:])) or len(cum) == 1

    def test_unreached_target_exits_3(self, capsys, tmp_path):
        raw = json.loads((CONFIGS / "fl_sim_small_france.json").read_text())
        raw["fl"]["rounds"] = 2
        raw["sim"]["target_accuracy"] = 0.999
        raw["sim"]["separation"] = 1.0
        cfg_path = tmp_path / "hard.json"
        cfg_path.write_text(json.dumps(raw))
        code, _, err = run_cli(capsys, "simulate", "--config", str(cfg_path),
                               "--out", str(tmp_path / "hard"))
        assert code == 3
        assert "not reached" in err
        # outputs are still written for inspection
        assert (tmp_path / "hard.csv").exists()


class TestPartition:
    def test_json_payload_shape(self, capsys):
        code, out, _ = run_cli(capsys, "partition", "--config", FL_DEMO)
        assert code == 0
        data = json.loads(out)
        assert len(data["per_client"]) == 20
        assert len(data["assignments"]) == 20
        for row in data["per_client"]:
            assert abs(sum(row) - 1.0) < 1e-9
        flat = [i for shard in data["assignments"] for i in shard]
        assert len(flat) == len(set(flat))
        assert data["exhaustion_warnings"] >= 0

    def test_alpha_override_concentrates_the_mix(self, capsys):
        _, out_iid, _ = run_cli(capsys, "partition", "--config", FL_DEMO)
        _, out_skew, _ = run_cli(capsys, "partition", "--config", FL_DEMO,
                                 "--alpha", "0.1")
        iid = json.loads(out_iid)
        skew = json.loads(out_skew)
        assert skew["alpha"] == 0.1
        max_iid = max(max(r) for r in iid["per_client"])
        max_skew = max(max(r) for r in skew["per_client"])
        assert max_skew > max_iid

    def test_centralized_config_rejected(self, capsys):
        code, _, err = run_cli(capsys, "partition", "--config", CEN_CIFAR)
        assert code == 1
        assert "error" in err


class TestOptimize:
    def test_table_fixture_ranking(self, capsys):
        code, out, _ = run_cli(capsys, "optimize", "--config", FL_DEMO,
                               "--fixtures", GRID_TABLE)
        assert code == 0
        data = json.loads(out)
        assert data["target_accuracy"] == 0.60
        assert len(data["cells"]) == 40
        winner = data["winner"]
        assert winner["clients_per_round"] == 1
        assert winner["local_epochs"] == 1
        assert winner["partition_alpha"] == 1000.0
        assert winner["at_target"]["carbon_cost"] == pytest.approx(3.65, rel=5e-3)
        assert len(data["pareto_stable"]) >= 1

    def test_csv_output_form(self, capsys, tmp_path):
        out_path = tmp_path / "grid.csv"
        code, _, _ = run_cli(capsys, "optimize", "--config", FL_DEMO,
                             "--fixtures", GRID_TABLE, "--out", str(out_path))
        assert code == 0
        rows = list(csv.reader(out_path.read_text().splitlines()))
        assert rows[0][:3] == ["clients_per_round", "local_epochs", "partition_alpha"]
        assert len(rows) == 41
        # winner row first: n=1, 1 LE
        assert rows[1][0] == "1" and rows[1][1] == "1"

    def test_all_unreached_exits_3(self, capsys, tmp_path):
        table = {
            "target_accuracy": 0.9,
            "blocks": [{
                "alpha": 1000.0, "local_epochs": 1,
                "rows": [
                    {"clients": 1, "target": None,
                     "stable": {"accuracy": 0.5, "rounds": 10, "co2_g": 1.0,
                                "carbon_cost": 2.0}},
                ],
            }],
        }
        path = tmp_path / "flat.json"
        path.write_text(json.dumps(table))
        code, out, err = run_cli(capsys, "optimize", "--config", FL_DEMO,
                                 "--fixtures", str(path))
        assert code == 3
        assert "no grid cell" in err
        assert json.loads(out)["winner"]["at_target"] is None

    def test_live_simulation_grid(self, capsys, tmp_path):
        raw = json.loads((CONFIGS / "fl_sim_small_france.json").read_text())
        raw["fl"]["pool_size"] = 4
        raw["fl"]["clients_per_round"] = 2
        raw["fl"]["rounds"] = 4
        raw["sim"]["target_accuracy"] = 0.5
        cfg_path = tmp_path / "tiny.json"
        cfg_path.write_text(json.dumps(raw))
        code, out, _ = run_cli(capsys, "optimize", "--config", str(cfg_path))
        assert code in (0, 3)
        data = json.loads(out)
        # pool of 4 caps the client axis: 4 x {1,5} LE x {iid, non-iid}
        assert len(data["cells"]) == 16


class TestCompare:
    def test_pue_scenarios_side_by_side(self, capsys):
        code, out, _ = run_cli(capsys, "compare",
                               "--config", CEN_SPEECH_WORLD,
                               "--config", CEN_SPEECH_GOOGLE)
        assert code == 0
        rows = list(csv.DictReader(out.splitlines()))
        assert [r["label"] for r in rows] == [
            "centralized_speech_world_france", "centralized_speech_google_france"]
        world = float(rows[0]["co2e_g:france"])
        google = float(rows[1]["co2e_g:france"])
        assert world == pytest.approx(1.4178077333333332, rel=1e-12)
        assert google == pytest.approx(0.9423752000000002, rel=1e-12)

    def test_fl_vs_centralized_with_fixture_schedule(self, capsys):
        code, out, _ = run_cli(capsys, "compare",
                               "--config", FL_NOMINAL,
                               "--config", FL_NOMINAL,
                               "--fixtures", SCHED_16X5,
                               "--fixtures", SCHED_16X5)
        assert code == 0
        rows = list(csv.DictReader(out.splitlines()))
        assert float(rows[0]["co2e_g:china"]) == pytest.approx(
            11.132097777777778, rel=1e-12)

    def test_single_config_rejected(self, capsys):
        code, _, err = run_cli(capsys, "compare", "--config", FL_NOMINAL)
        assert code == 1 and "at least two" in err

    def test_mismatched_grid_regions_rejected(self, capsys):
        code, _, err = run_cli(capsys, "compare",
                               "--config", CEN_SPEECH_WORLD,
                               "--config", FL_NOMINAL,
                               "--fixtures", SCHED_16X5,
                               "--fixtures", SCHED_16X5)
        assert code == 1
        assert "grid regions" in err


class TestPlot:
    def test_trace_to_energy_columns(self, capsys, tmp_path):
        base = tmp_path / "run"
        run_cli(capsys, "simulate", "--config", FL_DEMO, "--out", str(base))
        code, out, _ = run_cli(capsys, "plot", "--fixtures",
                               str(tmp_path / "run.csv"))
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "# round cumulative_wh"
        assert len(lines) >= 2

    def test_trace_with_config_prices_in_grams(self, capsys, tmp_path):
        base = tmp_path / "run"
        run_cli(capsys, "simulate", "--config", FL_DEMO, "--out", str(base))
        _, wh_out, _ = run_cli(capsys, "plot", "--fixtures", str(tmp_path / "run.csv"))
        code, g_out, _ = run_cli(capsys, "plot", "--fixtures",
                                 str(tmp_path / "run.csv"), "--config", FL_DEMO)
        assert code == 0
        assert g_out.splitlines()[0] == "# round cumulative_g"
        wh = [float(ln.split()[1]) for ln in wh_out.splitlines()[1:]]
        g = [float(ln.split()[1]) for ln in g_out.splitlines()[1:]]
        # france grid: grams = Wh x 0.0790
        for a, b in zip(wh, g):
            assert b == pytest.approx(a * 0.0790, rel=1e-12)

    def test_grid_output_to_scatter_columns(self, capsys, tmp_path):
        out_path = tmp_path / "grid.json"
        run_cli(capsys, "optimize", "--config", FL_DEMO, "--fixtures",
                GRID_TABLE, "--out", str(out_path))
        code, out, _ = run_cli(capsys, "plot", "--fixtures", str(out_path))
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "# co2e_g accuracy"
        assert len(lines) == 41

    def test_emission_report_to_series(self, capsys, tmp_path):
        report_path = tmp_path / "report.json"
        run_cli(capsys, "estimate", "--config", FL_NOMINAL, "--fixtures",
                SCHED_16X5, "--out", str(report_path))
        code, out, _ = run_cli(capsys, "plot", "--fixtures", str(report_path))
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "# series co2e_g"
        assert float(lines[1].split()[1]) == pytest.approx(11.132097777777778,
                                                           rel=1e-12)

    def test_plot_without_fixtures_rejected(self, capsys):
        code, _, err = run_cli(capsys, "plot")
        assert code == 1 and "fixtures" in err


class TestExitCodes:
    def test_missing_config_file_is_io_error(self, capsys):
        code, _, err = run_cli(capsys, "estimate", "--config", "/nonexistent.json")
        assert code == 2
        assert "i/o error" in err

    def test_invalid_config_value_is_validation_error(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({
            "mode": "centralized", "hardware": "v100-cifar10",
            "grid": "france", "pue": 0.9, "epochs": 1,
        }))
        code, _, err = run_cli(capsys, "estimate", "--config", str(bad))
        assert code == 1
        assert "pue must be >= 1.0" in err

    def test_malformed_json_is_validation_error(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code, _, err = run_cli(capsys, "estimate", "--config", str(bad))
        assert code == 1
        assert "not valid JSON" in err

    def test_missing_fixture_file_is_io_error(self, capsys):
        code, _, _ = run_cli(capsys, "estimate", "--config", FL_NOMINAL,
                             "--fixtures", "/nonexistent.json")
        assert code == 2

    def test_registry_env_extends_the_cli(self, capsys, tmp_path, monkeypatch):
        reg = tmp_path / "reg.json"
        reg.write_text(json.dumps({
            "grid:mars": {"c_rate_kg_per_kwh": 1.0},
        }))
        raw = json.loads((CONFIGS / "fl_tx2_nominal_china.json").read_text())
        raw["grid"] = "mars"
        cfg_path = tmp_path / "mars.json"
        cfg_path.write_text(json.dumps(raw))
        monkeypatch.setenv("FEDCARBON_REGISTRY", str(reg))
        code, out, _ = run_cli(capsys, "estimate", "--config", str(cfg_path),
                               "--fixtures", SCHED_16X5)
        assert code == 0
        report = json.loads(out)
        assert report["grid_region"] == "mars"
        assert report["co2e_g"] == pytest.approx(11.422222222222222, rel=1e-12)


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "fedcarbon", "estimate",
         "--config", FL_NOMINAL, "--fixtures", SCHED_16X5],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["co2e_g"] == pytest.approx(
        11.132097777777778, rel=1e-12)
