import numpy as np
import pytest

from gogsim.errors import NotAtEquilibrium, SettleTimeout, ValidationError
from gogsim.kernels import BACKENDS
from gogsim.scenario_io import load_scenario
from gogsim.sim import check_equilibrium, prepare, settle, simulate
from gogsim.system import System

from conftest import with_changes


def test_balanced_dispatch_holds(eb_quiet):
    r = simulate(eb_quiet)
    assert r.completed and r.reason is None
    assert np.max(np.abs(r.signal("AC.omega") - 1)) < 1e-6
    assert np.max(np.abs(r.signal("node.n6.V_dc") - r.signal("node.n6.V_dc")[0])) < 1e-6
    W = r.signal("MMC.W")
    assert np.max(np.abs(W - W[0])) < 1e-6


def test_recording_grid(eb_quiet):
    r = simulate(eb_quiet, t_end=0.01, record_every=5)
    np.testing.assert_allclose(r.time, np.arange(0, 0.0100001, 5e-4))
    assert r.states.shape == (len(r.time), len(r.labels))
    assert r.obs.shape == (len(r.time), len(r.obs_names))
    with pytest.raises(KeyError):
        r.signal("nope")


def test_dual_port_survives_dc_source_loss():
    r = simulate(load_scenario("single_ipc_energy_balancing_dc_loss"))
    assert r.completed
    w = r.signal("AC.omega")
    t = r.time
    tail = w[t > t[-1] - 0.2]
    assert np.ptp(tail) < 1e-4               # settled ...
    assert abs(tail[-1] - 1) > 1e-3          # ... away from nominal
    assert r.signal("MMC.W").min() > 0


def test_single_port_fails_on_dc_source_loss():
    sc = load_scenario("single_ipc_ac_gfm_dc_loss")
    r = simulate(sc)
    assert r.status == "unstable"
    assert r.t_fail > 4.5
    assert r.time[-1] < sc.options.t_end      # series stop at the failure
    assert r.code != 0


def test_event_times_snap_to_grid(eb_quiet):
    def edit(d):
        d["events"] = [{"t": 0.00013, "action": "set_load", "target": "L5", "value": 0.2}]
    r = simulate(with_changes(eb_quiet, edit), t_end=0.001)
    ev = r.events[0]
    assert ev["t_applied"] == pytest.approx(1e-4)
    assert ev["snap"] == pytest.approx(3e-5)


def test_until_event_ignores_later_events(eb_single):
    r = simulate(eb_single, t_end=0.01, until_event=0)
    assert r.events == []
    assert np.max(np.abs(r.signal("AC.omega") - 1)) < 1e-6


def test_energy_quadrature_matches_integrator(eb_single):
    r = simulate(eb_single, t_end=0.2)
    chk = r.energy_check["MMC"]
    assert abs(chk["delta_W"]) > 1e-5
    assert chk["error"] < 1e-9


def test_backends_agree(eb_single):
    if "compiled" not in BACKENDS:
        pytest.skip("compiled kernel not built")
    a = simulate(eb_single, t_end=0.02, backend="python")
    b = simulate(eb_single, t_end=0.02, backend="compiled")
    assert (a.backend, b.backend) == ("python", "compiled")
    np.testing.assert_allclose(a.states, b.states, rtol=0, atol=1e-12)


def test_analytic_fidelity_runs(eb_single):
    r = simulate(eb_single, fidelity="analytic", t_end=0.1)
    assert r.completed
    assert not any(n.startswith("cable.") for n in r.system.labels if r.system.active_mask()[
        r.system.state_index[n]])


def test_stiff_step_rejected(eb_single):
    with pytest.raises(ValidationError, match="dt"):
        simulate(eb_single, dt=5e-3, t_end=0.01)


def test_settle_nominal_returns_initial_point(eb_quiet):
    sysm, x0 = prepare(eb_quiet)
    snap = settle(eb_quiet)
    assert snap.t == 0.0
    np.testing.assert_allclose(snap.x, x0, atol=1e-12)
    assert snap.dx_norm < 1e-8


def test_settle_after_load_step(eb_single):
    snap = settle(eb_single)
    assert snap.dx_norm < 1e-8
    assert snap.get("MMC.omega") < 1.0
    assert snap.get("MMC.W") > 0


def test_settle_timeout(eb_single):
    with pytest.raises(SettleTimeout):
        settle(eb_single, horizon=0.01, chunk=0.005)


def test_check_equilibrium_rejects_perturbed_state(eb_quiet):
    sysm, x = prepare(eb_quiet)
    assert check_equilibrium(sysm, x) < 1e-8
    x = x.copy()
    x[sysm.state_index["MMC.W"]] *= 1.01
    with pytest.raises(NotAtEquilibrium):
        check_equilibrium(sysm, x)


def test_system_parameters_round_trip(eb_quiet):
    sysm = System(eb_quiet)
    assert sysm.get_param("U1.p_set") == pytest.approx(0.15)
    sysm.set_param("U1.p_set", 0.2)
    assert sysm.get_param("U1.p_set") == pytest.approx(0.2)
    sysm.set_param("MMC.p_mmc_set", 0.1)
    assert sysm.get_param("MMC.p_ac_set") == pytest.approx(0.1)
    assert sysm.get_param("MMC.p_dc_set") == pytest.approx(0.1)


def test_synchronous_residual_ignores_common_rotation(eb_quiet):
    sysm, x = prepare(eb_quiet)
    dx, _ = sysm.rhs(x)
    dx = dx + 0.0
    for n in ("U1.theta", "MMC.theta", "P2.theta_pll"):
        dx[sysm.state_index[n]] += 0.3
    assert np.max(np.abs(sysm.synchronous_residual(dx))) < 1e-9
