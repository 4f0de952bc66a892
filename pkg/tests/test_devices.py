import cmath
import math

import pytest

from gogsim import devices as dv
from gogsim.errors import DeadBusError, ValidationError


def test_droop_source_balanced():
    src = dv.AcGfmSource(p_set=0.3, k_ac=0.05)
    _, w = dv.step_ac_gfm_source(src, 0.3, 1e-4)
    assert w == 1.0


def test_droop_source_direct_evaluation():
    src = dv.AcGfmSource(p_set=0.3, k_ac=0.05)
    new, w = dv.step_ac_gfm_source(src, 0.5, 1e-3)
    assert w == pytest.approx(0.99)
    assert new.theta == pytest.approx(dv.OMEGA_B * -0.01 * 1e-3)


def test_redispatch_restores_nominal():
    # U1 picks up 0.2 pu of extra load once its setpoint follows
    load = 0.35
    assert dv.AcGfmSource(p_set=0.15).omega(load) < 1.0
    assert dv.AcGfmSource(p_set=0.35).omega(load) == 1.0


def test_source_validation():
    with pytest.raises(ValidationError):
        dv.AcGfmSource(k_ac=-1)
    with pytest.raises(ValidationError):
        dv.AcGfmSource(E=0.0)
    with pytest.raises(ValidationError):
        dv.step_ac_gfm_source(dv.AcGfmSource(), 0.0, 0.0)
    with pytest.raises(ValidationError):
        dv.DcGfmSource(k_dc=-0.1)
    with pytest.raises(ValidationError):
        dv.PowerLoad(float("nan"))


def test_dc_source_droop():
    s = dv.DcGfmSource(v_set=1.0, p_set=0.2, k_dc=0.02)
    assert s.voltage(0.2) == 1.0
    assert s.voltage(0.7) == pytest.approx(0.99)


def run_pll(v_of_t, t_end, dt=1e-4, st=None):
    st = st or dv.PllState()
    t = 0.0
    for _ in range(int(round(t_end / dt))):
        st, w = dv.step_pll(st, v_of_t(t), dt)
        t += dt
    return st, w


def test_pll_rests_on_constant_phasor():
    st, w = run_pll(lambda t: 1.0 + 0j, 0.1)
    assert st.theta == pytest.approx(0.0, abs=1e-14)
    assert w == pytest.approx(1.0, abs=1e-14)


def test_pll_tracks_frequency_step():
    dw = -0.01
    st, w = run_pll(lambda t: cmath.exp(1j * dv.OMEGA_B * dw * t), 1.0)
    assert st.omega == pytest.approx(0.99, abs=1e-6)
    # the returned value adds kp times the half-step lag of the held phasor
    assert w == pytest.approx(0.99, abs=2e-4)
    ref = dv.OMEGA_B * dw * 1.0
    lag = math.remainder(ref - st.theta, 2 * math.pi)
    assert abs(lag) < dv.OMEGA_B * abs(dw) * 1e-4    # under one step of phase


def test_pll_dead_bus():
    st = dv.PllState()
    st, _ = dv.step_pll(st, 0.01 + 0j, 0.01)     # short dip is tolerated
    with pytest.raises(DeadBusError):
        for _ in range(5):
            st, _ = dv.step_pll(st, 0.0j, 0.01)


def test_pll_error_is_sine_of_angle():
    assert dv.pll_error(0.0, cmath.rect(1.2, 0.3)) == pytest.approx(math.sin(0.3))
