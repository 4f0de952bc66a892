import json

import pytest
import yaml

from gogsim.cli import main
from gogsim.scenario_io import BUNDLED


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def edited(tmp_path, fn, name="single_ipc_energy_balancing"):
    d = yaml.safe_load((BUNDLED / f"{name}.yaml").read_text())
    fn(d)
    p = tmp_path / "edited.yaml"
    p.write_text(yaml.safe_dump(d))
    return str(p)


def test_simulate_writes_csv_and_summary(tmp_path):
    assert run(tmp_path, "simulate", "single_ipc_energy_balancing", "--t-end", "0.01") == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["status"] == "completed" and summary["exit_code"] == 0
    assert summary["files"]
    raw = (tmp_path / summary["files"][0]).read_bytes()
    assert b"\r\n" not in raw
    head, first = raw.decode().splitlines()[:2]
    assert head.split(",")[0] == "time_s"
    assert first.split(",")[0] == "0.0"
    assert "MMC.W" in summary["final"]


def test_csv_floats_round_trip(tmp_path):
    run(tmp_path, "simulate", "single_ipc_energy_balancing", "--t-end", "0.01")
    summary = json.loads((tmp_path / "summary.json").read_text())
    for f in summary["files"]:
        lines = (tmp_path / f).read_text().splitlines()
        vals = lines[-1].split(",")
        assert all(repr(float(v)) == v for v in vals)


def test_unstable_run_exits_3(tmp_path):
    assert run(tmp_path, "simulate", "single_ipc_ac_gfm_dc_loss") == 3
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["status"] == "unstable" and summary["t_fail"] > 4.5


def test_missing_scenario_exits_2(tmp_path, capsys):
    assert run(tmp_path, "simulate", "nope") == 2
    assert "not found" in capsys.readouterr().err


def test_bad_step_exits_2(tmp_path):
    assert run(tmp_path, "simulate", "single_ipc_energy_balancing", "--dt", "5e-3") == 2


def test_eb_gains_outside_hypothesis_rejected(tmp_path, capsys):
    def edit(d):
        d["ipcs"][0]["controller"].update(k_p_ac=0.3, k_w_ac=0.2)
    assert run(tmp_path, "simulate", edited(tmp_path, edit)) == 2
    assert "hypothesis" in capsys.readouterr().err


def test_linearize_theorem_mode(tmp_path):
    assert run(tmp_path, "linearize", "single_ipc_energy_balancing") == 0
    rep = json.loads((tmp_path / "linearize.json").read_text())
    assert len(rep["cases"]) == 6
    assert {c["verdict"] for c in rep["cases"]} == {"stable"}


def test_linearize_at_equilibrium(tmp_path):
    argv = ["linearize", "single_ipc_energy_balancing", "--mode", "at_equilibrium", "--settle"]
    assert run(tmp_path, *argv) == 0
    rep = json.loads((tmp_path / "linearize.json").read_text())
    assert rep["verdict"] == "stable" and rep["max_real"] < 0
    assert len(rep["A"]) == len(rep["labels"])


def test_linearize_off_equilibrium_exits_2(tmp_path):
    # a flat start under load is not a rest point
    def edit(d):
        d["options"]["init"] = "flat"
    argv = ["linearize", edited(tmp_path, edit), "--mode", "at_equilibrium"]
    assert run(tmp_path, *argv) == 2


def test_check_theorem1(tmp_path, capsys):
    assert run(tmp_path, "check-theorem1", "--n", "200", "--seed", "7") == 0
    assert "0 counterexamples" in capsys.readouterr().out
    rep = json.loads((tmp_path / "theorem1.json").read_text())
    assert rep["cases"] == 1200


def test_check_theorem1_rejects_zero_draws(tmp_path):
    assert run(tmp_path, "check-theorem1", "--n", "0") == 2


def test_check_gains(tmp_path, capsys):
    assert run(tmp_path, "check-gains", "four_ipc_consistent") == 0
    assert run(tmp_path, "check-gains", "four_ipc_inconsistent") == 2
    out = capsys.readouterr().out
    assert "alpha ratio mismatch" in out
    rep = json.loads((tmp_path / "gains.json").read_text())
    assert not rep["consistent"]


def test_dispatch_writes_solved_scenario(tmp_path):
    assert run(tmp_path, "dispatch", "single_ipc_energy_balancing", "--free", "V4.p_set") == 0
    rep = json.loads((tmp_path / "dispatch.json").read_text())
    assert rep["transfers"]["MMC"]["P_ac"] == pytest.approx(0.33, abs=0.01)
    assert (tmp_path / "dispatched.yaml").exists()


def test_dispatch_infeasible_exits_nonzero(tmp_path):
    argv = ["dispatch", "single_ipc_energy_balancing", "--free", "U1.p_set",
            "--free", "MMC.v_dc_set", "--target", "MMC.P_ac=3"]
    assert run(tmp_path, *argv) == 4


def test_dispatch_argument_errors(tmp_path):
    assert run(tmp_path, "dispatch", "single_ipc_energy_balancing") == 2
    argv = ["dispatch", "single_ipc_energy_balancing", "--free", "V4.p_set", "--target", "x"]
    assert run(tmp_path, *argv) == 2


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GOGSIM_OUT", str(tmp_path / "env"))
    assert main(["check-theorem1", "--n", "5"]) == 0
    assert (tmp_path / "env" / "theorem1.json").exists()
