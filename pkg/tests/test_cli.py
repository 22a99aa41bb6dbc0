import json
import os

import pytest

import starstream as ss
from starstream.cli import main


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


@pytest.fixture()
def trace_suite(tmp_path):
    out = tmp_path / "suite"
    rc = main(
        [
            "gen-traces",
            "--seed", "1",
            "--count", "4",
            "--duration", "200",
            "--videos", "1",
            "--video-duration", "60",
            "--out", str(out),
        ]
    )
    assert rc == 0
    return out


class TestGenTraces:
    def test_writes_traces_and_manifest(self, tmp_path):
        out = tmp_path / "gen"
        rc = main(
            ["gen-traces", "--seed", "1", "--count", "10", "--duration", "150",
             "--out", str(out)]
        )
        assert rc == 0
        csvs = sorted(os.listdir(out / "network"))
        assert len(csvs) == 10
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 1
        assert len(manifest["network_traces"]) == 10

    def test_rerun_is_byte_identical(self, tmp_path):
        out = tmp_path / "gen"
        args = ["gen-traces", "--seed", "5", "--count", "3", "--duration", "120",
                "--videos", "1", "--video-duration", "60", "--out", str(out)]
        assert main(args) == 0
        before = {}
        for root, _dirs, files in os.walk(out):
            for name in files:
                path = os.path.join(root, name)
                before[path] = read(path)
        assert main(args) == 0
        for path, content in before.items():
            assert read(path) == content

    def test_missing_seed_is_usage_error(self, tmp_path, capsys):
        rc = main(["gen-traces", "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_scenario_capacity_drop(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"drop_start_s": 100, "drop_length_s": 30}))
        out = tmp_path / "drop"
        rc = main(
            ["--config", str(cfg), "gen-traces", "--seed", "2", "--count", "1",
             "--duration", "300", "--scenario", "capacity-drop", "--out", str(out)]
        )
        assert rc == 0
        path = out / "network" / os.listdir(out / "network")[0]
        trace = ss.load_network_trace(path, 2.5)
        tps = trace.throughputs()
        assert sum(tps[110:125]) / 15 < 4.0
        assert sum(tps[70:90]) / 20 > 7.0


class TestEvalPredictor:
    def test_hm_and_ma_rows(self, trace_suite, tmp_path):
        out = tmp_path / "eval"
        rc = main(
            ["eval-predictor", "--traces", str(trace_suite / "network"),
             "--predictors", "hm,ma", "--m", "30", "--n", "5", "--out", str(out)]
        )
        assert rc == 0
        rows = json.loads((out / "predictor_metrics.json").read_text())["rows"]
        assert [r["predictor"] for r in rows] == ["hm", "ma"]
        for row in rows:
            assert row["mape_pct"] >= 0.0
        csv_lines = (out / "predictor_metrics.csv").read_text().splitlines()
        assert len(csv_lines) == 3

    def test_oracle_predictor_scores_perfectly(self, trace_suite, tmp_path):
        out = tmp_path / "eval"
        rc = main(
            ["eval-predictor", "--traces", str(trace_suite / "network"),
             "--predictors", "oracle", "--m", "30", "--n", "5", "--out", str(out)]
        )
        assert rc == 0
        row = json.loads((out / "predictor_metrics.json").read_text())["rows"][0]
        assert row["mae"] == 0.0
        assert row["shift_f1"] == 1.0

    def test_short_prediction_file_reports_coverage_error(self, trace_suite, tmp_path):
        preds = tmp_path / "short.jsonl"
        preds.write_text(
            json.dumps({"t": 29, "throughputs": [5.0] * 5, "shifts": [0] * 5}) + "\n"
        )
        out = tmp_path / "eval"
        rc = main(
            ["eval-predictor", "--traces", str(trace_suite / "network"),
             "--predictors", f"file:{preds}", "--m", "30", "--n", "5",
             "--out", str(out)]
        )
        assert rc == 4  # protocol-class exit code
        payload = json.loads((out / "predictor_metrics.json").read_text())
        assert "no prediction" in payload["errors"][0]["error"]


class TestSimulateAndCompare:
    def run_sim(self, trace_suite, out, controller, extra=()):
        args = [
            "simulate",
            "--network-traces", str(trace_suite / "network"),
            "--video-traces", str(trace_suite / "video"),
            "--controller", controller,
            "--offset", "60",
            "--out", str(out),
            *extra,
        ]
        return main(args)

    def test_pair_outputs(self, trace_suite, tmp_path):
        out = tmp_path / "sim-fixed"
        rc = self.run_sim(trace_suite, out, "fixed")
        assert rc == 0
        names = sorted(os.listdir(out))
        jsons = [n for n in names if n.endswith(".json") and n != "summary.json"]
        gop_logs = [n for n in names if n.endswith("_gops.csv")]
        decision_logs = [n for n in names if n.endswith("_decisions.csv")]
        assert len(jsons) == 4  # 1 video x 4 traces
        assert len(gop_logs) == 4
        assert len(decision_logs) == 4
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["pairs"]) == 4

    def test_controller_selection(self, trace_suite, tmp_path):
        for controller in ("adarate", "mpc", "starstream"):
            out = tmp_path / f"sim-{controller}"
            rc = self.run_sim(trace_suite, out, controller)
            assert rc == 0
            summary = json.loads((out / "summary.json").read_text())
            assert summary["controller"] == controller

    def test_ablation_v1_freezes_gamma(self, trace_suite, tmp_path):
        out = tmp_path / "sim-v1"
        rc = self.run_sim(trace_suite, out, "starstream", extra=("--ablation", "v1"))
        assert rc == 0
        decision_csv = next(
            n for n in os.listdir(out) if n.endswith("_decisions.csv")
        )
        lines = (out / decision_csv).read_text().splitlines()
        header = lines[0].split(",")
        gi = header.index("gamma")
        assert all(float(l.split(",")[gi]) == 1.0 for l in lines[1:])

    def test_compare_outputs_and_identical_deltas(self, trace_suite, tmp_path):
        out_a = tmp_path / "run-a"
        out_b = tmp_path / "run-b"
        assert self.run_sim(trace_suite, out_a, "mpc") == 0
        assert self.run_sim(trace_suite, out_b, "mpc") == 0
        cmp_out = tmp_path / "cmp"
        rc = main(["compare", str(out_a), str(out_b), "--out", str(cmp_out)])
        assert rc == 0
        names = sorted(os.listdir(cmp_out))
        assert [n for n in names if n.startswith("cdf_")] == [
            "cdf_mean_accuracy.csv",
            "cdf_mean_offloading_delay.csv",
            "cdf_mean_response_delay.csv",
            "cdf_normalized_e2e_tp.csv",
        ]
        deltas = (cmp_out / "deltas.csv").read_text().splitlines()[1:]
        assert deltas
        assert all(line.split(",")[-1] == "0.0" for line in deltas)

    def test_compare_disjoint_pairs_is_error(self, trace_suite, tmp_path):
        out_a = tmp_path / "da"
        out_b = tmp_path / "db"
        assert self.run_sim(trace_suite, out_a, "fixed") == 0
        assert self.run_sim(trace_suite, out_b, "fixed") == 0
        summary = json.loads((out_b / "summary.json").read_text())
        summary["pairs"] = summary["pairs"][:-1]
        (out_b / "summary.json").write_text(json.dumps(summary))
        rc = main(["compare", str(out_a), str(out_b), "--out", str(tmp_path / "dc")])
        assert rc == 2

    def test_parallel_jobs_match_serial(self, trace_suite, tmp_path):
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        assert self.run_sim(trace_suite, serial, "fixed") == 0
        assert self.run_sim(trace_suite, parallel, "fixed", extra=("--jobs", "2")) == 0
        assert read(serial / "summary.json") == read(parallel / "summary.json")


class TestProfileCommand:
    def test_profile_output(self, trace_suite, tmp_path):
        out = tmp_path / "profile.json"
        rc = main(
            ["profile", "--video-traces", str(trace_suite / "video"),
             "--out", str(out)]
        )
        assert rc == 0
        payload = json.loads(out.read_text())
        assert payload["pruned_frame_rate"] in ss.FRAME_RATE_CANDIDATES
        assert len(payload["entries"]) > 0


class TestConfigPrecedence:
    def test_env_overrides_config_file(self, tmp_path, monkeypatch):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"count": 7, "seed": 3}))
        out = tmp_path / "env-gen"
        monkeypatch.setenv("STARSTREAM_COUNT", "2")
        rc = main(
            ["--config", str(cfg), "gen-traces", "--duration", "120",
             "--out", str(out)]
        )
        assert rc == 0
        assert len(os.listdir(out / "network")) == 2

    def test_cli_overrides_env(self, tmp_path, monkeypatch):
        out = tmp_path / "cli-gen"
        monkeypatch.setenv("STARSTREAM_COUNT", "9")
        rc = main(
            ["gen-traces", "--seed", "3", "--count", "1", "--duration", "120",
             "--out", str(out)]
        )
        assert rc == 0
        assert len(os.listdir(out / "network")) == 1
