import math

import pytest

from gogsim import mmc
from gogsim.errors import ValidationError
from gogsim.scenario import ControllerCfg


def cfg(kind, **kw):
    return ControllerCfg(type=kind, **kw)


def test_energy_step():
    assert mmc.energy_step(0.05, 0.3, 0.3, 1e-4) == 0.05
    assert mmc.energy_step(0.05, 0.0, 0.1, 0.2) == pytest.approx(0.07)
    with pytest.raises(ValidationError):
        mmc.energy_step(0.05, 0.0, 0.0, -1.0)


def test_nominal_energy_of_reference_converter():
    p = mmc.MmcParams()
    assert p.w_nom_joules == pytest.approx(6 * 0.5 * (8e-3 / 400) * (400 * 1600) ** 2)
    assert p.w_nom_joules == pytest.approx(24.576e6)
    assert p.w_nom_pu() == pytest.approx(0.049152)
    assert p.w_nom_pu(1000) == pytest.approx(0.024576)
    assert mmc.W_NOM_DEFAULT == pytest.approx(p.w_nom_pu())


def test_mmc_params_validation():
    with pytest.raises(ValidationError):
        mmc.MmcParams(n_arm=0)
    with pytest.raises(ValidationError):
        mmc.MmcParams(x_t=-0.1)
    z = mmc.MmcParams().coupling_impedance(1000)
    assert z == pytest.approx(2 * complex(0.009, 0.25))


def test_hybrid_droop_at_setpoints():
    c = cfg("hybrid_droop", p_ac_set=0.2, p_dc_set=0.2, v_dc_set=1.01)
    W = mmc.W_NOM_DEFAULT
    out, st = mmc.ctrl_hybrid_droop({}, {"P_ac": 0.2, "P_dc": 0.2, "W": W}, c, 1e-4)
    assert out == {"omega": 1.0, "v_dc": 1.01}
    assert st == {"z_dc": 0.0}


def test_hybrid_droop_power_term():
    c = cfg("hybrid_droop", p_ac_set=0.3)
    out, _ = mmc.ctrl_hybrid_droop({}, {"P_ac": 0.2, "P_dc": 0.0, "W": 0.049152}, c, 1e-4)
    assert out["omega"] == pytest.approx(1.005)


def test_hybrid_droop_energy_term():
    c = cfg("hybrid_droop", w_set=0.1)
    meas = {"P_ac": 0.0, "P_dc": 0.0, "W": 0.06}
    # a unit energy base makes the law act on pu*s directly
    out, _ = mmc.ctrl_hybrid_droop({}, meas, c, 1e-4, w_base=1.0)
    assert out["omega"] == pytest.approx(0.98)
    # by default the error is relative to the nominal energy
    out, _ = mmc.ctrl_hybrid_droop({}, meas, c, 1e-4)
    assert out["omega"] == pytest.approx(1 + 0.5 * (-0.04 / mmc.W_NOM_DEFAULT))


def test_hybrid_droop_dc_filter():
    c = cfg("hybrid_droop")      # tau_dc = 10 ms
    meas = {"P_ac": 0.0, "P_dc": 0.2, "W": mmc.W_NOM_DEFAULT}
    _, st = mmc.ctrl_hybrid_droop({"z_dc": 0.0}, meas, c, 0.01)
    assert st["z_dc"] == pytest.approx(0.05 * 0.2 * (1 - math.exp(-1)))


def test_energy_balancing_settled():
    c = cfg("energy_balancing", v_dc_set=0.99)
    W = mmc.W_NOM_DEFAULT
    out, _ = mmc.ctrl_energy_balancing({"m_ac": 0.0, "m_dc": 0.0}, {"W": W}, c, 1e-4)
    assert out == {"omega": 1.0, "v_dc": 0.99}


def test_energy_balancing_proportional_map():
    c = cfg("energy_balancing", w_set=0.1)
    e = -0.04
    out, _ = mmc.ctrl_energy_balancing({"m_ac": e, "m_dc": e}, {"W": 0.06}, c, 1e-4, w_base=1.0)
    assert out["omega"] - 1 == pytest.approx(-0.02)
    assert out["v_dc"] - 1 == pytest.approx(-0.02)


def test_energy_balancing_derivative_kick_decays():
    c = cfg("energy_balancing", k_p_ac=0.0125, tau_ac=0.001, w_set=0.1)
    dt, e = 1e-4, 0.01
    st = {"m_ac": 0.0, "m_dc": 0.0}
    kicks = []
    for _ in range(30):
        out, st = mmc.ctrl_energy_balancing(st, {"W": 0.1 + e}, c, dt, w_base=1.0)
        kicks.append(out["omega"] - 1 - c.k_w_ac * e)
    n = len(kicks)
    exact = [0.0125 * e / 0.001 * math.exp(-(k + 1) * dt / 0.001) for k in range(n)]
    assert kicks == pytest.approx(exact, rel=1e-9)


def test_energy_balancing_without_filter_uses_power_rate():
    c = cfg("energy_balancing", tau_ac=0.0, tau_dc=0.0, w_set=0.05)
    out, _ = mmc.ctrl_energy_balancing({}, {"W": 0.05, "P_ac": 0.1, "P_dc": 0.3}, c, 1e-4)
    assert out["omega"] == pytest.approx(1 + c.k_p_ac * 0.2)
    assert out["v_dc"] == pytest.approx(1 + c.k_p_dc * 0.2)


def test_ac_gfm_balanced_and_dc_pass_through():
    c = cfg("ac_gfm", p_ac_set=0.3, p_dc_set=0.3)
    W = mmc.W_NOM_DEFAULT
    out, st = mmc.ctrl_ac_gfm({}, {"P_ac": 0.3, "W": W}, c, 1e-4)
    assert out["omega"] == 1.0
    assert out["p_dc_ref"] == pytest.approx(0.3)
    # an energy deficit raises the DC power demand
    out, _ = mmc.ctrl_ac_gfm(st, {"P_ac": 0.3, "W": W - 0.001}, c, 1e-4)
    assert out["p_dc_ref"] > 0.3


def test_dc_gfm_balanced():
    c = cfg("dc_gfm", p_ac_set=0.2, p_dc_set=0.2)
    W = mmc.W_NOM_DEFAULT
    out, _ = mmc.ctrl_dc_gfm({}, {"P_dc": 0.2, "W": W}, {"theta": 0.0, "v_mag": 1.0}, c, 1e-4)
    assert out["v_dc_cmd"] == 1.0
    assert out["i_ac_ref"] == pytest.approx(0.2)
    with pytest.raises(ValidationError):
        mmc.ctrl_dc_gfm({}, {"P_dc": 0.2, "W": W}, {"theta": 0.0, "v_mag": 0.0}, c, 1e-4)


def test_volt_var():
    c = cfg("hybrid_droop", q_set=0.1)
    assert mmc.volt_var(0.1, c) == 1.0
    assert mmc.volt_var(-0.1, c) == pytest.approx(1.01)


def test_droop_equivalent_setpoints():
    c = cfg("hybrid_droop", k_p_ac=0.05, k_w_ac=0.5, k_p_dc=0.05, k_w_dc=0.5,
            p_ac_set=0.2, p_dc_set=0.2, w_set=0.05)
    r = mmc.droop_equivalent_setpoints(c, 0.05, w_base=1.0)
    assert r == {"P_ref_ac": 0.2, "P_ref_dc": 0.2}
    r = mmc.droop_equivalent_setpoints(c, 0.06, w_base=1.0)
    assert r["P_ref_ac"] == pytest.approx(0.3)
    assert r["P_ref_dc"] == pytest.approx(0.1)
    with pytest.raises(ValidationError):
        mmc.droop_equivalent_setpoints(cfg("hybrid_droop", k_p_ac=0.0), 0.05)


def test_reference_gain_sets_fill_defaults():
    c = cfg("energy_balancing", gains="grid_of_grids")
    assert (c.k_p_ac, c.k_p_dc, c.tau_ac) == (0.01228, 0.004, 0.001)
    c = cfg("hybrid_droop", k_w_ac=0.7)
    assert c.k_w_ac == 0.7 and c.k_w_dc == 0.5


def test_energy_balancing_hypothesis_enforced():
    with pytest.raises(ValueError):
        cfg("energy_balancing", k_w_ac=0.01, k_p_ac=0.02)
