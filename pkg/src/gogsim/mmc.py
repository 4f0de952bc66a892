"""Macroscopic MMC model and its terminal controllers.

The MMC is reduced to its total stored energy ``W`` (pu·s) with
``dW/dt = P_dc - P_ac``. The step functions below are the discrete
counterparts of the laws the simulator integrates in continuous time;
first-order filters use exact zero-order-hold updates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError

# Reference gain sets: single-IPC system and grid of grids.
GAINS_SINGLE_IPC = {
    "dc_gfm": dict(k_p_ac=0.0, k_q_ac=0.05, k_p_dc=0.05, k_w_ac=0.0, k_w_dc=0.0,
                   tau_ac=1.0, tau_dc=0.01),
    "ac_gfm": dict(k_p_ac=0.05, k_q_ac=0.05, k_p_dc=0.0, k_w_ac=0.0, k_w_dc=0.0,
                   tau_ac=0.04, tau_dc=0.0),
    "hybrid_droop": dict(k_p_ac=0.05, k_q_ac=0.05, k_p_dc=0.05, k_w_ac=0.5, k_w_dc=0.5,
                         tau_ac=0.0, tau_dc=0.01),
    "energy_balancing": dict(k_p_ac=0.0125, k_q_ac=0.05, k_p_dc=0.025, k_w_ac=0.5,
                             k_w_dc=0.5, tau_ac=0.001, tau_dc=0.01),
}
GAINS_GRID_OF_GRIDS = {
    "hybrid_droop": dict(k_p_ac=0.05, k_q_ac=0.05, k_p_dc=0.08125, k_w_ac=0.4, k_w_dc=0.4,
                         tau_ac=0.0, tau_dc=0.001),
    "energy_balancing": dict(k_p_ac=0.01228, k_q_ac=0.05, k_p_dc=0.004, k_w_ac=0.4,
                             k_w_dc=0.4, tau_ac=0.001, tau_dc=0.001),
}

# Energy PI for the single-port controls: about 2 Hz, damping 0.707.
ENERGY_PI_KP = 2 * 0.707 * (2 * math.pi * 2.0)
ENERGY_PI_KI = (2 * math.pi * 2.0) ** 2


@dataclass(frozen=True)
class MmcParams:
    """Ratings and cell data of one MMC (500 MW reference converter).

    Impedances are in pu on the converter rating ``s_rated`` (MW).
    """

    s_rated: float = 500.0
    n_arm: int = 400
    c_sm: float = 8e-3       # F
    v_sm: float = 1.6e3      # V
    r_t: float = 0.004
    x_t: float = 0.15
    r_s: float = 0.005
    x_s: float = 0.1
    r_a: float = 0.01
    x_a: float = 0.2

    def __post_init__(self):
        for k in ("s_rated", "n_arm", "c_sm", "v_sm"):
            if not getattr(self, k) > 0:
                raise ValidationError(f"MMC {k} must be positive")
        for k in ("r_t", "x_t", "r_s", "x_s", "r_a", "x_a"):
            if getattr(self, k) < 0:
                raise ValidationError(f"MMC {k} must be non-negative")

    @property
    def c_eq(self) -> float:
        return self.c_sm / self.n_arm

    @property
    def w_nom_joules(self) -> float:
        """Six arms, each an equivalent capacitor ``c_eq`` at ``n_arm * v_sm``."""
        return 6 * 0.5 * self.c_eq * (self.n_arm * self.v_sm) ** 2

    def w_nom_pu(self, s_base: float | None = None) -> float:
        """Nominal energy in pu·s on ``s_base`` (defaults to the rating)."""
        return self.w_nom_joules / ((s_base or self.s_rated) * 1e6)

    def coupling_impedance(self, s_base: float | None = None) -> complex:
        """Transformer plus phase reactor, in pu on ``s_base``."""
        z = complex(self.r_t + self.r_s, self.x_t + self.x_s)
        return z * (s_base or self.s_rated) / self.s_rated


def _zoh(x, u, dt, tau):
    """Exact ZOH update of ``tau dx/dt = u - x``; ``tau = 0`` passes ``u``."""
    if tau <= 0:
        return u
    return u + (x - u) * math.exp(-dt / tau)


def energy_step(W: float, p_ac: float, p_dc: float, dt: float) -> float:
    """Advance the stored energy; exact for powers held over the step."""
    if not dt > 0:
        raise ValidationError("dt must be positive")
    return W + (p_dc - p_ac) * dt


def volt_var(q_ac: float, cfg) -> float:
    """AC voltage magnitude reference from reactive-power droop."""
    return cfg.v_set + cfg.k_q_ac * (cfg.q_set - q_ac)


W_NOM_DEFAULT = 0.049152   # pu·s, default MMC on its own rating


def _dw(cfg, W, w_base=W_NOM_DEFAULT):
    """Energy error in pu·s; the reference defaults to ``w_base``."""
    return W - (cfg.w_set if cfg.w_set is not None else w_base)


def _dw_rel(cfg, W, w_base):
    """Energy error per unit of the nominal energy, as the droop laws see it."""
    if not w_base > 0:
        raise ValidationError("w_base must be positive")
    return _dw(cfg, W, w_base) / w_base


def ctrl_hybrid_droop(state: dict, meas: dict, cfg, dt: float, w_base=W_NOM_DEFAULT):
    """Hybrid power/energy droop.

    The energy gains act on ``(W - W*)/w_base``. ``state`` holds the DC
    filter output ``z_dc``. Returns ``({"omega", "v_dc"}, new_state)``.
    """
    e = _dw_rel(cfg, meas["W"], w_base)
    omega = cfg.omega_set + cfg.k_p_ac * (cfg.p_ac_set - meas["P_ac"]) + cfg.k_w_ac * e
    u = cfg.k_p_dc * (meas["P_dc"] - cfg.p_dc_set) + cfg.k_w_dc * e
    z = _zoh(state.get("z_dc", u), u, dt, cfg.tau_dc)
    return {"omega": omega, "v_dc": cfg.v_dc_set + z}, {"z_dc": z}


def ctrl_energy_balancing(state: dict, meas: dict, cfg, dt: float, w_base=W_NOM_DEFAULT):
    """Energy-balancing control, PD action on the energy error only.

    The derivative parts are realised through the filter states ``m_ac``
    and ``m_dc`` (low-passed energy error): ``s/(tau s + 1) e`` equals
    ``(e - m)/tau``. With a zero time constant the derivative is the
    measured ``P_dc - P_ac``, which then has to be supplied in ``meas``.
    ``k_w`` multiplies the relative error ``(W - W*)/w_base``; ``k_p``
    multiplies the rate of the absolute error, a power in pu.
    """
    e = _dw(cfg, meas["W"], w_base)
    out, new = {}, {}
    for side, kw, kp, tau, ref in (("ac", cfg.k_w_ac, cfg.k_p_ac, cfg.tau_ac, cfg.omega_set),
                                   ("dc", cfg.k_w_dc, cfg.k_p_dc, cfg.tau_dc, cfg.v_dc_set)):
        if tau > 0:
            m = _zoh(state.get("m_" + side, e), e, dt, tau)
            d = (e - m) / tau
            # the DC law filters its proportional part as well
            prop = kw * (m if side == "dc" else e) / w_base
        else:
            m = e
            d = meas["P_dc"] - meas["P_ac"]
            prop = kw * e / w_base
        new["m_" + side] = m
        out["omega" if side == "ac" else "v_dc"] = ref + prop + kp * d
    return out, new


def ctrl_ac_gfm(state: dict, meas: dict, cfg, dt: float):
    """Single-port AC forming: P-f droop, volt-var, energy PI on the DC current.

    ``state``: ``pf`` (filtered P_ac), ``xi`` (energy-error integral).
    """
    pf = _zoh(state.get("pf", meas["P_ac"]), meas["P_ac"], dt, cfg.tau_ac)
    e = _dw(cfg, meas["W"])
    xi = state.get("xi", 0.0) + e * dt
    omega = cfg.omega_set + cfg.k_p_ac * (cfg.p_ac_set - pf)
    p_dc = cfg.p_dc_set - cfg.k_p_w * e - cfg.k_i_w * xi
    v_ref = volt_var(meas.get("Q_ac", cfg.q_set), cfg)
    v_dc = meas.get("V_dc", 1.0)
    return ({"omega": omega, "v_q_ref": v_ref, "p_dc_ref": p_dc,
             "i_dc_ref": p_dc / v_dc}, {"pf": pf, "xi": xi})


def ctrl_dc_gfm(state: dict, meas: dict, pll: dict, cfg, dt: float):
    """Single-port DC forming: P_dc-V droop, energy PI on the AC current.

    The AC current is oriented on the PLL angle; ``pll`` carries
    ``theta`` and ``v_mag`` of the terminal voltage.
    """
    u = cfg.k_p_dc * (meas["P_dc"] - cfg.p_dc_set)
    z = _zoh(state.get("z_dc", u), u, dt, cfg.tau_dc)
    e = _dw(cfg, meas["W"])
    xi = state.get("xi", 0.0) + e * dt
    p_ac = cfg.p_ac_set + cfg.k_p_w * e + cfg.k_i_w * xi
    vm = pll["v_mag"]
    if vm <= 0:
        raise ValidationError("PLL terminal voltage must be positive")
    i_ac = p_ac / vm * complex(math.cos(pll["theta"]), math.sin(pll["theta"]))
    return ({"v_dc_cmd": cfg.v_dc_set + z, "p_ac_ref": p_ac, "i_ac_ref": i_ac},
            {"z_dc": z, "xi": xi})


def droop_equivalent_setpoints(cfg, W: float, w_base=W_NOM_DEFAULT) -> dict:
    """Energy-shifted power references that turn hybrid droop into plain droop."""
    if not (cfg.k_p_ac > 0 and cfg.k_p_dc > 0):
        raise ValidationError("equivalent setpoints need k_p_ac > 0 and k_p_dc > 0")
    e = _dw_rel(cfg, W, w_base)
    return {"P_ref_ac": cfg.p_ac_set + cfg.k_w_ac / cfg.k_p_ac * e,
            "P_ref_dc": cfg.p_dc_set - cfg.k_w_dc / cfg.k_p_dc * e}
