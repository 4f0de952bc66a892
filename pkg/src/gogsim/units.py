"""Per-unit bases shared by every subgrid of a scenario."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PerUnitBase:
    """System bases.

    ``s_base`` in MW, ``v_ac_base`` line-to-line RMS kV, ``v_dc_base``
    pole-to-pole kV, ``f_base`` in Hz. Energy is expressed in pu·s, so the
    energy base is ``s_base`` MJ.
    """

    s_base: float = 500.0
    v_ac_base: float = 320.0
    v_dc_base: float = 640.0
    f_base: float = 50.0

    def __post_init__(self):
        for name in ("s_base", "v_ac_base", "v_dc_base", "f_base"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def w_base(self) -> float:
        """Energy base in MJ (``s_base`` times one second)."""
        return self.s_base * 1.0

    @property
    def omega_base(self) -> float:
        return 2.0 * math.pi * self.f_base

    @property
    def z_ac_base(self) -> float:
        return self.v_ac_base ** 2 / self.s_base

    @property
    def z_dc_base(self) -> float:
        return self.v_dc_base ** 2 / self.s_base

    def energy_pu(self, joules: float) -> float:
        return joules / (self.s_base * 1e6)
