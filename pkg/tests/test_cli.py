import json
import os

import numpy as np
import pytest
import yaml

from pcsflow import cli
from pcsflow.errors import ConfigError, VersionError
from pcsflow.spectral import FlowParams
from pcsflow.stepping import StepControl, integrate

from conftest import make_state

CONST_CONFIG = {
    "params": {"p": 1, "lambda": 2.0, "n_max": 2},
    "init": {"mean": 1.0, "harmonics": []},
    "control": {"rel_tol": 1e-12, "abs_tol": 1e-16, "k0_stop": 1e4},
    "output": {"directory": "out"},
    "seed": 0,
}

PERT_CONFIG = {
    "params": {"p": 1, "lambda": "7/2", "n_max": 8},
    "init": {
        "perturbation": {
            "m": 2,
            "n": 7,
            "delta": 0.002,
            "harmonics": [{"j": 1, "amplitude": 1.0, "phase": 0.0}],
        }
    },
    "control": {"k0_stop": 1e4},
    "output": {"directory": "out"},
    "seed": 0,
}


def write_config(tmp_path, doc, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def run_simulation(tmp_path, doc):
    doc = dict(doc)
    doc["output"] = {"directory": str(tmp_path / "out")}
    code = cli.main(["simulate", "--config", write_config(tmp_path, doc)])
    return code, str(tmp_path / "out" / "trajectory.jsonl")


class TestConfig:
    def test_round_trip_is_idempotent(self, tmp_path):
        path = write_config(tmp_path, PERT_CONFIG)
        config = cli.load_config(path)
        emitted = cli.emit_config(config)
        config2 = cli.parse_config(emitted)
        assert cli.emit_config(config2) == emitted

    def test_unknown_key_rejected(self, tmp_path):
        doc = dict(CONST_CONFIG)
        doc["typo_section"] = {}
        with pytest.raises(ConfigError, match="typo_section"):
            cli.load_config(write_config(tmp_path, doc))

    def test_unknown_nested_key_rejected(self, tmp_path):
        doc = json.loads(json.dumps(CONST_CONFIG))
        doc["control"]["dt"] = 0.1
        with pytest.raises(ConfigError, match="dt"):
            cli.load_config(write_config(tmp_path, doc))

    def test_invalid_lambda_rejected(self, tmp_path):
        doc = json.loads(json.dumps(CONST_CONFIG))
        doc["params"]["lambda"] = 1.0
        with pytest.raises(ConfigError):
            cli.load_config(write_config(tmp_path, doc))

    def test_initial_state_harmonics(self):
        config = cli.parse_config(json.loads(json.dumps(CONST_CONFIG)))
        state = cli.initial_state(config)
        assert state.mean == 1.0
        config2 = cli.parse_config(
            {
                "params": {"p": 1, "lambda": 2.0, "n_max": 4},
                "init": {"mean": 1.0, "harmonics": [{"n": 1, "cos": 0.005, "sin": 0.002}]},
            }
        )
        state2 = cli.initial_state(config2)
        assert state2.coeffs[1] == pytest.approx(0.0025 - 0.001j)


class TestSimulate:
    def test_constant_run(self, tmp_path):
        code, traj_path = run_simulation(tmp_path, CONST_CONFIG)
        assert code == cli.EXIT_OK
        traj, header = cli.read_trajectory(traj_path)
        assert header["version"] == 1
        assert traj.T_est == pytest.approx(0.5, abs=1e-8)
        metrics = (tmp_path / "out" / "metrics.csv").read_text().strip().split("\n")
        assert metrics[0] == "t,k0,T_est_running,trap_margin,seminorm2,sup_dev"
        last = metrics[-1].split(",")
        assert float(last[0]) == pytest.approx(0.5, abs=1e-6)
        assert float(last[2]) == pytest.approx(0.5, abs=1e-8)

    def test_malformed_config_exits_1_without_files(self, tmp_path):
        doc = json.loads(json.dumps(CONST_CONFIG))
        doc["params"]["lambda"] = 0.5
        doc["output"] = {"directory": str(tmp_path / "out")}
        code = cli.main(["simulate", "--config", write_config(tmp_path, doc)])
        assert code == cli.EXIT_CONFIG
        assert not (tmp_path / "out").exists()

    def test_hypothesis_failing_init_flags_margin(self, tmp_path):
        doc = json.loads(json.dumps(CONST_CONFIG))
        doc["params"] = {"p": 1, "lambda": 2.0, "n_max": 8}
        doc["init"] = {"mean": 1.0, "harmonics": [{"n": 1, "cos": 0.01, "sin": 0.0}]}
        doc["control"] = {"k0_stop": 100.0}
        doc["output"] = {"directory": str(tmp_path / "out")}
        code = cli.main(["simulate", "--config", write_config(tmp_path, doc)])
        metrics = (tmp_path / "out" / "metrics.csv").read_text().strip().split("\n")
        first = metrics[1].split(",")
        assert float(first[3]) < 0  # margin negative at t=0
        assert code == cli.EXIT_TRAP

    def test_positivity_loss_exit_code(self, tmp_path):
        doc = json.loads(json.dumps(CONST_CONFIG))
        doc["params"] = {"p": 1, "lambda": 2.0, "n_max": 8}
        doc["init"] = {"mean": 1.0, "harmonics": [{"n": 1, "cos": 0.99, "sin": 0.0}]}
        doc["control"] = {"k0_stop": 1e4}
        doc["output"] = {"directory": str(tmp_path / "out")}
        code = cli.main(["simulate", "--config", write_config(tmp_path, doc)])
        assert code == cli.EXIT_POSITIVITY


@pytest.fixture(scope="module")
def pert_run(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("pert")
    code, traj_path = run_simulation(tmp_path, PERT_CONFIG)
    assert code == cli.EXIT_OK
    return traj_path


class TestAnalyze:
    def test_blowup_report(self, pert_run, capsys):
        assert cli.main(["analyze", "--traj", pert_run, "--what", "blowup"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["pass"] is True
        assert report["T_est"] == pytest.approx(0.5000010, abs=1e-5)
        assert report["envelope"]["ok"] is True

    def test_rates_report(self, pert_run, capsys):
        assert cli.main(["analyze", "--traj", pert_run, "--what", "rates"]) == 0
        report = json.loads(capsys.readouterr().out)
        mode1 = report["modes"][0]
        assert mode1["pass"] is True
        assert mode1["exponent"] == pytest.approx(mode1["alpha_theory"], abs=0.05)

    def test_trap_report(self, pert_run, capsys):
        assert cli.main(["analyze", "--traj", pert_run, "--what", "trap"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["holds"] is True and report["min_margin"] > 0
        assert report["c_source"] == "closed-form"

    def test_normalized_report(self, pert_run, capsys):
        assert cli.main(["normalize", "--traj", pert_run]) == 0
        report = json.loads(capsys.readouterr().out)
        beta = report["beta_theory"]
        assert beta == pytest.approx(10.25)
        assert abs(report["sup_rate"] - beta) <= 0.1 * beta
        assert report["pass"] is True

    def test_report_written_to_out_dir(self, pert_run, tmp_path, capsys):
        out = str(tmp_path / "reports")
        assert cli.main(["analyze", "--traj", pert_run, "--what", "trap", "--out", out]) == 0
        capsys.readouterr()
        assert os.path.exists(os.path.join(out, "report_trap.json"))

    def test_version_mismatch_exit_4(self, pert_run, tmp_path):
        with open(pert_run) as fh:
            lines = fh.read().splitlines()
        header = json.loads(lines[0])
        header["version"] = 99
        bad = tmp_path / "bad.jsonl"
        bad.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
        assert cli.main(["analyze", "--traj", str(bad), "--what", "trap"]) == cli.EXIT_VERSION


class TestTrajectoryIO:
    def test_self_describing_round_trip(self, tmp_path):
        params = FlowParams(p=2, lam=2.0, n_max=4)
        traj = integrate(make_state(params, {0: 1.0}), StepControl(k0_stop=100.0))
        traj.T_est = 0.666
        path = str(tmp_path / "t.jsonl")
        cli.write_trajectory(path, traj, {"note": "test"})
        back, header = cli.read_trajectory(path)
        assert header["config"] == {"note": "test"}
        assert back.T_est == 0.666
        assert len(back.snapshots) == len(traj.snapshots)
        for a, b in zip(back.snapshots, traj.snapshots):
            assert a.t == b.t
            assert np.array_equal(a.coeffs, b.coeffs)
        assert back.events == traj.events

    def test_missing_header(self, tmp_path):
        path = tmp_path / "junk.jsonl"
        path.write_text('{"kind": "snapshot"}\n')
        with pytest.raises(VersionError):
            cli.read_trajectory(str(path))


class TestRender:
    def test_unnormalized_frames(self, pert_run, tmp_path, capsys):
        out = str(tmp_path / "frames")
        assert cli.main(["render", "--traj", pert_run, "--frames", "4", "--out", out]) == 0
        capsys.readouterr()
        with open(os.path.join(out, "curves.svg")) as fh:
            svg = fh.read()
        assert svg.count("<path") == 4
        assert os.path.exists(os.path.join(out, "frame_003.csv"))

    def test_normalized_frames_deterministic(self, pert_run, tmp_path, capsys):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        for out in (out1, out2):
            code = cli.main(
                ["render", "--traj", pert_run, "--frames", "3", "--normalized", "--out", out]
            )
            assert code == 0
        capsys.readouterr()
        with open(os.path.join(out1, "curves.svg"), "rb") as fh:
            svg1 = fh.read()
        with open(os.path.join(out2, "curves.svg"), "rb") as fh:
            svg2 = fh.read()
        assert svg1 == svg2

    def test_non_rational_lambda_exit_5(self, tmp_path, capsys):
        code, traj_path = run_simulation(tmp_path, CONST_CONFIG)  # lam=2.0 untagged
        assert code == 0
        assert cli.main(["render", "--traj", traj_path, "--frames", "2"]) == cli.EXIT_RATIONAL
        capsys.readouterr()


class TestVerify:
    def test_clean_build_passes(self, capsys):
        assert cli.main(["verify", "--seed", "3"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 5
        assert "FAIL" not in out

    def test_h_kernel_mutation_is_caught(self, capsys, monkeypatch):
        # a sign flip in the tuple kernel must break oracle equivalence
        from pcsflow import rhs as rhs_module

        original = rhs_module.h_kernel

        def flipped(p, lam, q1, q2):
            return -original(p, lam, q1, q2)

        monkeypatch.setattr(rhs_module, "h_kernel", flipped)
        assert cli.main(["verify", "--seed", "3"]) != 0
        out = capsys.readouterr().out
        assert "FAIL  oracle_equivalence" in out


class TestVerifyThreads:
    def test_thread_pool_path(self, capsys, monkeypatch):
        # PCSFLOW_THREADS > 1 routes the independent checks through a pool
        monkeypatch.setenv("PCSFLOW_THREADS", "2")
        monkeypatch.setattr(
            cli,
            "VERIFY_CHECKS",
            (("a", lambda seed: (True, "ok")), ("b", lambda seed: (True, "ok"))),
        )
        assert cli.main(["verify"]) == 0
        assert capsys.readouterr().out.count("PASS") == 2

    def test_bad_env_value_falls_back(self, monkeypatch):
        monkeypatch.setenv("PCSFLOW_THREADS", "lots")
        assert cli.thread_count() == 1


class TestBench:
    def test_smoke_table_and_exponent(self, capsys):
        rows = cli.bench_table(n_values=(4, 8), p_values=(1,), include_oracle=True)
        assert {r["n_max"] for r in rows} == {4, 8}
        assert all("fast_ns" in r and "convolution_ns" in r and "direct_ns" in r for r in rows)
        exp = cli.scaling_exponent(rows, "convolution_ns", 1, n_range=(4, 8))
        assert exp is None  # needs >= 3 points
