"""Non-IPC devices: droop AC/DC sources, PLL-based current sources, loads.

Angles live in a frame rotating at nominal frequency, so a device running
at ``omega`` pu advances its angle at ``omega_b * (omega - 1)`` rad/s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import DeadBusError, ValidationError
from ._layout import DEAD_BUS_T, DEAD_BUS_V

OMEGA_B = 2 * math.pi * 50.0

# Second-order SRF-PLL: 20 Hz natural frequency, damping 0.707. The loop
# works on omega in pu, hence the division by omega_b.
PLL_WN = 2 * math.pi * 20.0
PLL_ZETA = 0.707


def pll_gains(wn: float = PLL_WN, zeta: float = PLL_ZETA, omega_b: float = OMEGA_B):
    return 2 * zeta * wn / omega_b, wn * wn / omega_b


@dataclass(frozen=True)
class AcGfmSource:
    theta: float = 0.0
    E: float = 1.0
    omega_set: float = 1.0
    p_set: float = 0.0
    k_ac: float = 0.02
    connected: bool = True

    def __post_init__(self):
        if self.k_ac < 0:
            raise ValidationError("k_ac must be non-negative")
        if self.connected and not self.E > 0:
            raise ValidationError("a connected source needs E > 0")

    def omega(self, p_ac: float) -> float:
        return self.omega_set + self.k_ac * (self.p_set - p_ac)


def step_ac_gfm_source(src: AcGfmSource, p_ac: float, dt: float,
                       omega_b: float = OMEGA_B):
    """Advance the droop source angle over ``dt``; returns ``(src, omega)``."""
    if not dt > 0:
        raise ValidationError("dt must be positive")
    w = src.omega(p_ac) if src.connected else src.omega_set
    return replace(src, theta=src.theta + omega_b * (w - 1.0) * dt), w


@dataclass(frozen=True)
class DcGfmSource:
    v_set: float = 1.0
    p_set: float = 0.0
    k_dc: float = 0.02
    connected: bool = True

    def __post_init__(self):
        if self.k_dc < 0:
            raise ValidationError("k_dc must be non-negative")

    def voltage(self, p_out: float) -> float:
        """Terminal voltage for an injected power ``p_out``."""
        return self.v_set + self.k_dc * (self.p_set - p_out)


@dataclass(frozen=True)
class PllState:
    theta: float = 0.0
    xi: float = 0.0          # integrator; omega = 1 + kp*err + xi
    kp: float = pll_gains()[0]
    ki: float = pll_gains()[1]
    dead_time: float = 0.0

    @property
    def omega(self) -> float:
        return 1.0 + self.xi


@dataclass(frozen=True)
class PllGflSource:
    p_cmd: float
    pll: PllState = PllState()
    connected: bool = True


@dataclass(frozen=True)
class PowerLoad:
    p: float
    q: float = 0.0
    connected: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.p) and math.isfinite(self.q)):
            raise ValidationError("load values must be finite")


def pll_error(theta: float, v: complex) -> float:
    """Normalised q-axis voltage, ``sin(angle(v) - theta)``."""
    m = abs(v)
    return (v.imag * math.cos(theta) - v.real * math.sin(theta)) / m


def step_pll(st: PllState, v: complex, dt: float, omega_b: float = OMEGA_B):
    """One RK4 step of the PLL with the terminal phasor held over ``dt``.

    Returns ``(state, omega_pll)``; raises :class:`DeadBusError` once the
    terminal has been below 0.1 pu for more than 20 ms.
    """
    if not dt > 0:
        raise ValidationError("dt must be positive")
    if abs(v) <= DEAD_BUS_V:
        dead = st.dead_time + dt
        if dead > DEAD_BUS_T + 1e-12:
            raise DeadBusError("PLL lost synchronisation on a dead bus")
        return replace(st, dead_time=dead), 1.0 + st.xi

    def f(th, xi):
        e = pll_error(th, v)
        return omega_b * (st.kp * e + xi), st.ki * e

    th, xi = st.theta, st.xi
    a1, b1 = f(th, xi)
    a2, b2 = f(th + 0.5 * dt * a1, xi + 0.5 * dt * b1)
    a3, b3 = f(th + 0.5 * dt * a2, xi + 0.5 * dt * b2)
    a4, b4 = f(th + dt * a3, xi + dt * b3)
    th += dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
    xi += dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
    w = 1.0 + st.kp * pll_error(th, v) + xi
    return replace(st, theta=th, xi=xi, dead_time=0.0), w
