import json
import os

import numpy as np
import pytest

from egs_control.cli import main
from egs_control.errors import ConfigError
from egs_control.experiments import (
    ExperimentConfig,
    build_problem,
    preset,
    read_summary,
    read_trace,
    write_summary,
)

FAST = ["--nodes", "6", "--runs", "2", "--horizon", "50"]


def run_cli(*argv):
    return main(list(argv))


class TestPresets:
    @pytest.mark.parametrize(
        "name,n_nodes",
        [("fig2-n20", 20), ("fig2-n50", 50), ("fig2-n100", 100), ("fig3", 50)],
    )
    def test_preset_node_counts(self, name, n_nodes):
        assert preset(name).n_nodes == n_nodes

    def test_fig3_walks_resources(self):
        exp = preset("fig3")
        assert exp.scenario == "resource-walk"

    def test_fig4_cap_profiles(self):
        assert preset("fig4-uniform").node_cap_profile == "uniform"
        assert preset("fig4-tiered").node_cap_profile == "three-tier"

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset("fig9")

    def test_unknown_config_key_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"bogus_key": 1})


class TestBuildProblem:
    def test_deterministic_resolution(self):
        a = build_problem(preset("fig2-n20"))
        b = build_problem(preset("fig2-n20"))
        assert [s.members() for s in a[1].sessions] == [s.members() for s in b[1].sessions]
        assert np.array_equal(a[0].lam_node, b[0].lam_node)

    def test_resolved_copy_replays_identically(self):
        config, table, scenario, resolved = build_problem(preset("fig3", horizon=2000))
        config2, table2, scenario2, _ = build_problem(resolved)
        assert [s.members() for s in table.sessions] == [s.members() for s in table2.sessions]
        assert scenario == scenario2

    def test_tiered_caps_quartiles(self):
        config, table, _, _ = build_problem(preset("fig4-tiered"))
        caps = np.asarray(config.lam_node)
        p = 0.05
        assert np.sum(caps == 1.5 * p) == 12  # quarter of 50
        assert np.sum(caps == 0.5 * p) == 12
        assert np.sum(caps == p) == 26

    def test_slater_violation_is_total(self):
        exp = preset("fig2-n20", n_nodes=6, lam_min=0.2)
        with pytest.raises(ConfigError):
            build_problem(exp)

    def test_step_bound_violation_is_total(self):
        exp = preset("fig2-n20", n_nodes=6, theta_c=1e6)
        with pytest.raises(ConfigError):
            build_problem(exp)
        override = exp.replace(override_step_bound=True)
        build_problem(override)  # no raise


class TestRunCommand:
    def test_outputs_written(self, tmp_path, capsys):
        out = tmp_path / "exp"
        code = run_cli("run", "--preset", "fig2-n20", *FAST, "--out", str(out))
        assert code == 0
        for fname in ("trace.csv", "summary.txt", "manifest.json"):
            assert (out / fname).exists()
        summary = read_summary(out / "summary.txt")
        assert summary["horizon"] == 50
        assert summary["n_runs"] == 2
        trace = read_trace(out / "trace.csv")
        assert list(trace.dtype.names) == ["slot", "sum_lambda", "sum_q", "max_rate", "min_rate"]
        assert len(trace) == 50

    def test_manifest_replay_is_byte_identical(self, tmp_path):
        first = tmp_path / "a"
        second = tmp_path / "b"
        assert run_cli("run", "--preset", "fig2-n20", *FAST, "--out", str(first)) == 0
        assert run_cli("run", "--config", str(first / "manifest.json"), "--out", str(second)) == 0
        assert (first / "trace.csv").read_bytes() == (second / "trace.csv").read_bytes()
        assert (first / "summary.txt").read_bytes() == (second / "summary.txt").read_bytes()

    def test_seed_changes_trace(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli("run", "--preset", "fig2-n20", *FAST, "--seed", "1", "--out", str(a))
        run_cli("run", "--preset", "fig2-n20", *FAST, "--seed", "2", "--out", str(b))
        assert (a / "trace.csv").read_bytes() != (b / "trace.csv").read_bytes()

    def test_infeasible_config_exits_2(self, tmp_path, capsys):
        cfg = preset("fig2-n20", n_nodes=6, lam_min=0.2).to_dict()
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(cfg))
        code = run_cli("run", "--config", str(path), "--out", str(tmp_path / "out"))
        assert code == 2
        assert "error:" in capsys.readouterr().err
        assert not (tmp_path / "out" / "trace.csv").exists()

    def test_step_bound_rejection_and_override(self, tmp_path, capsys):
        cfg = preset("fig2-n20", n_nodes=6, theta_c=1e6, horizon=20, n_runs=1).to_dict()
        path = tmp_path / "hot.json"
        path.write_text(json.dumps(cfg))
        assert run_cli("run", "--config", str(path), "--out", str(tmp_path / "o1")) == 2
        assert "error:" in capsys.readouterr().err
        code = run_cli(
            "run", "--config", str(path), "--override-step-bound",
            "--out", str(tmp_path / "o2"),
        )
        assert code == 0
        assert (tmp_path / "o2" / "trace.csv").exists()

    def test_emit_oracle_adds_summary_keys(self, tmp_path):
        out = tmp_path / "exp"
        run_cli("run", "--preset", "fig2-n20", *FAST, "--emit-oracle", "--out", str(out))
        summary = read_summary(out / "summary.txt")
        assert "oracle_lambda_hat" in summary
        assert summary["oracle_kkt_residual"] < 1e-8


class TestSolveCommand:
    def test_json_payload(self, tmp_path):
        out = tmp_path / "solution.json"
        code = run_cli("solve", "--preset", "fig2-n20", "--nodes", "6", "--out", str(out))
        assert code == 0
        payload = json.loads(out.read_text())
        assert set(payload) == {
            "lambda_hat", "p_c", "p_u", "iterations", "kkt_residual", "sessions",
        }
        assert payload["kkt_residual"] < 1e-8
        assert len(payload["lambda_hat"]) == len(payload["sessions"])

    def test_stdout_when_no_out(self, capsys):
        assert run_cli("solve", "--preset", "fig2-n20", "--nodes", "6") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["p_c"] >= 0


class TestSummaryFormat:
    def test_round_trip_values(self, tmp_path):
        path = tmp_path / "s.txt"
        write_summary(
            path,
            [("a", 0.1234567890123456789), ("b", True), ("c", None), ("d", "fig3")],
        )
        back = read_summary(path)
        assert back["a"] == 0.1234567890123456789
        assert back["b"] is True
        assert back["c"] is None
        assert back["d"] == "fig3"
