import numpy as np
import pytest

from gogsim.dispatch import (DispatchProblem, UnderDetermined, apply_setpoints,
                             dof_count, solve_dispatch)
from gogsim.errors import InfeasibleDispatch, ValidationError
from gogsim.scenario_io import load_scenario
from gogsim.sim import derivative_norm, prepare, simulate
from gogsim.system import System

from conftest import with_changes


def unloaded(d):
    for dev in d["devices"]:
        if dev["kind"] in ("ac_load", "dc_load", "pll_source"):
            dev["p"] = 0.0
        if dev["kind"] in ("ac_source", "dc_source"):
            dev["p_set"] = 0.0
    d["events"] = []


def test_zero_load_gives_nominal_setpoints(eb_single):
    sc = with_changes(eb_single, unloaded)
    res = solve_dispatch(DispatchProblem(sc, ["V4.p_set", "MMC.v_dc_set"],
                                         {"MMC.P_ac": 0.0}, fidelity="analytic"))
    assert res.setpoints["V4.p_set"] == pytest.approx(0.0, abs=1e-10)
    assert res.setpoints["MMC.v_dc_set"] == pytest.approx(1.0, abs=1e-10)
    assert res.transfers["MMC"]["P_ac"] == pytest.approx(0.0, abs=1e-10)
    assert res.residual < 1e-10


def test_initial_row_transfer(eb_single):
    res = solve_dispatch(DispatchProblem(eb_single, ["V4.p_set"]))
    p = res.transfers["MMC"]
    assert p["P_ac"] == pytest.approx(0.33, abs=0.01)
    assert p["P_ac"] == pytest.approx(p["P_dc"], abs=1e-10)      # lossless MMC
    assert res.notes and "cable" in res.notes[0]


def test_dispatched_scenario_is_an_equilibrium(eb_single):
    res = solve_dispatch(DispatchProblem(eb_single, ["V4.p_set"]))
    sc = with_changes(apply_setpoints(eb_single, res.setpoints),
                      lambda d: d.update(events=[]))
    sysm, x = prepare(sc)
    assert derivative_norm(sysm, x) < 1e-8


def test_hybrid_droop_power_setpoint_dispatch(eb_single):
    def edit(d):
        d["ipcs"][0]["controller"] = {"type": "hybrid_droop"}
        d["events"] = []
    sc = with_changes(eb_single, edit)
    res = solve_dispatch(DispatchProblem(sc, ["V4.p_set", "MMC.p_mmc_set"]))
    # the AC balance at nominal frequency fixes the transfer
    p = res.setpoints["MMC.p_mmc_set"]
    assert p == pytest.approx(res.transfers["MMC"]["P_ac"], abs=1e-9)
    assert 0.32 < p < 0.33           # load minus U1, plus line losses
    c = apply_setpoints(sc, res.setpoints).ipc("MMC").controller
    assert c.p_ac_set == c.p_dc_set == p


def test_infeasible_transfer(eb_single):
    with pytest.raises(InfeasibleDispatch):
        solve_dispatch(DispatchProblem(eb_single, ["U1.p_set", "MMC.v_dc_set"],
                                       {"MMC.P_ac": 3.0}))


def test_unknown_names_rejected(eb_single):
    with pytest.raises(ValidationError, match="free setpoint"):
        solve_dispatch(DispatchProblem(eb_single, ["Q9.p_set"]))
    with pytest.raises(ValidationError, match="target"):
        solve_dispatch(DispatchProblem(eb_single, ["V4.p_set"], {"MMC.nope": 1.0}))


def test_open_direction_reported(eb_single):
    # U1 meets its setpoint at nominal frequency anyway: the target adds
    # no information and the DC voltage level stays open
    with pytest.raises(UnderDetermined):
        solve_dispatch(DispatchProblem(eb_single, ["V4.p_set", "MMC.v_dc_set"],
                                       {"U1.P": 0.15}))
    with pytest.raises(ValidationError, match="unknowns"):
        solve_dispatch(DispatchProblem(eb_single, ["V4.p_set", "U1.p_set"]))


def test_dof_count(eb_single):
    sysm = System(eb_single)
    neq, nun = dof_count(sysm, DispatchProblem(eb_single, ["V4.p_set"], {"MMC.P_ac": 0.3}))
    neq0, nun0 = dof_count(sysm, DispatchProblem(eb_single, []))
    assert (neq - neq0, nun - nun0) == (1, 1)


def test_zero_transfer_through_dc1():
    sc = load_scenario("grid_of_grids_energy_balancing")
    at = {(e.target, e.field): e.value for e in sc.events if 0 < e.t <= 2.2}

    def edit(d):
        for dev in d["devices"]:
            if dev["id"] == "W3":
                dev["p"] = 0.01
            if dev["id"] == "U2":
                dev["p_set"] = at[("U2", "p_set")]
        for p in d["ipcs"]:
            if (p["id"], "v_dc_set") in at:
                p["controller"]["v_dc_set"] = at[(p["id"], "v_dc_set")]
        d["events"] = []
    r = simulate(with_changes(sc, edit), t_end=0.2)
    for ipc in "AB":
        assert np.max(np.abs(r.signal(f"{ipc}.P_dc"))) < 1e-3
    # C only feeds the shunt leakage of the 220 km of DC1 cable
    assert 0 < -r.final("C.P_dc") < 0.01
    assert np.max(np.abs(r.signal("AC1.omega") - 1)) < 1e-6
