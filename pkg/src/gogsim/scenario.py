"""Scenario schema.

A scenario is a plain data document (YAML on disk) validated with
pydantic; unknown keys are rejected everywhere. Powers are in pu on the
scenario base, energies in pu·s, times in seconds.
"""
from __future__ import annotations

from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import mmc as _mmc
from .devices import pll_gains
from .network import (AC_LINE_C, AC_LINE_L, AC_LINE_R, DC_CABLE_C, DC_CABLE_G,
                      DC_CABLE_L, DC_CABLE_R)

SCHEMA_ID = "gogsim/1"
CONTROLLERS = ("ac_gfm", "dc_gfm", "hybrid_droop", "energy_balancing")


class _M(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class Base(_M):
    s_base: float = Field(500.0, gt=0)
    v_ac_base: float = Field(320.0, gt=0)
    v_dc_base: float = Field(640.0, gt=0)
    f_base: float = Field(50.0, gt=0)


class Bus(_M):
    id: str
    shunt_c: float = Field(0.0, ge=0, description="lumped shunt capacitance, uF")


class Branch(_M):
    frm: str = Field(alias="from")
    to: str
    length_km: float = Field(gt=0)
    r: float = Field(AC_LINE_R, ge=0, description="ohm/km")
    l: float = Field(AC_LINE_L * 1e3, gt=0, description="mH/km")
    c: float = Field(AC_LINE_C * 1e6, ge=0, description="uF/km")


class AcGrid(_M):
    id: str
    buses: list[Bus] = Field(min_length=1)
    branches: list[Branch] = []


class Node(_M):
    id: str
    shunt_c: float = Field(0.0, ge=0, description="lumped shunt capacitance, uF")


class Segment(_M):
    frm: str = Field(alias="from")
    to: str
    length_km: float = Field(gt=0)
    r: tuple[float, float, float] = DC_CABLE_R
    l: tuple[float, float, float] = tuple(x * 1e3 for x in DC_CABLE_L)  # mH/km
    c: float = Field(DC_CABLE_C * 1e6, gt=0, description="uF/km")
    g: float = Field(DC_CABLE_G * 1e6, ge=0, description="uS/km")

    @model_validator(mode="after")
    def _positive(self):
        if min(self.r) <= 0 or min(self.l) <= 0:
            raise ValueError("cable branch r and l must be positive")
        return self


class DcGrid(_M):
    id: str
    nodes: list[Node] = Field(min_length=1)
    segments: list[Segment] = []


class AcSourceCfg(_M):
    kind: Literal["ac_source"]
    id: str
    bus: str
    p_set: float = 0.0
    e: float = Field(1.0, gt=0)
    omega_set: float = 1.0
    k: float = Field(0.02, ge=0, description="P-f droop, pu/pu")
    r: float = Field(0.002, ge=0, description="internal resistance, pu")
    x: float = Field(0.1, gt=0, description="internal reactance, pu")
    connected: bool = True


class PllSourceCfg(_M):
    kind: Literal["pll_source"]
    id: str
    bus: str
    p: float = 0.0
    kp: float = Field(default_factory=lambda: pll_gains()[0], gt=0)
    ki: float = Field(default_factory=lambda: pll_gains()[1], gt=0)
    connected: bool = True


class AcLoadCfg(_M):
    kind: Literal["ac_load"]
    id: str
    bus: str
    p: float = 0.0
    q: float = 0.0
    connected: bool = True


class DcSourceCfg(_M):
    kind: Literal["dc_source"]
    id: str
    node: str
    p_set: float = 0.0
    v_set: float = Field(1.0, gt=0)
    k: float = Field(0.02, ge=0, description="P-V droop, pu/pu")
    connected: bool = True


class DcLoadCfg(_M):
    kind: Literal["dc_load"]
    id: str
    node: str
    p: float = 0.0
    connected: bool = True


Device = Annotated[Union[AcSourceCfg, PllSourceCfg, AcLoadCfg, DcSourceCfg, DcLoadCfg],
                   Field(discriminator="kind")]


class MmcCfg(_M):
    s_rated: float = Field(500.0, gt=0)
    n_arm: int = Field(400, gt=0)
    c_sm: float = Field(8e-3, gt=0)
    v_sm: float = Field(1.6e3, gt=0)
    r_t: float = Field(0.004, ge=0)
    x_t: float = Field(0.15, ge=0)
    r_s: float = Field(0.005, ge=0)
    x_s: float = Field(0.1, ge=0)
    r_a: float = Field(0.01, ge=0)
    x_a: float = Field(0.2, ge=0)

    def params(self) -> _mmc.MmcParams:
        return _mmc.MmcParams(**self.model_dump())


class ControllerCfg(_M):
    """Union-wide controller record; gains not given come from the selected reference set."""

    type: Literal["ac_gfm", "dc_gfm", "hybrid_droop", "energy_balancing"]
    gains: Literal["single_ipc", "grid_of_grids"] = "single_ipc"
    omega_set: float = 1.0
    v_dc_set: float = 1.0
    p_ac_set: float = 0.0
    p_dc_set: float = 0.0
    q_set: float = 0.0
    v_set: float = 1.0
    w_set: Optional[float] = Field(None, gt=0, description="pu·s; default W_nom")
    k_p_ac: Optional[float] = Field(None, ge=0)
    k_q_ac: Optional[float] = Field(None, ge=0)
    k_p_dc: Optional[float] = Field(None, ge=0)
    k_w_ac: Optional[float] = Field(None, ge=0)
    k_w_dc: Optional[float] = Field(None, ge=0)
    tau_ac: Optional[float] = Field(None, ge=0)
    tau_dc: Optional[float] = Field(None, ge=0)
    tau_q: float = Field(0.01, gt=0)
    k_p_w: float = Field(_mmc.ENERGY_PI_KP, ge=0)
    k_i_w: float = Field(_mmc.ENERGY_PI_KI, ge=0)
    pll_kp: float = Field(default_factory=lambda: pll_gains()[0], gt=0)
    pll_ki: float = Field(default_factory=lambda: pll_gains()[1], gt=0)
    lag: Optional[float] = Field(None, ge=0, description="inner-loop lag, s")

    @model_validator(mode="after")
    def _fill(self):
        table = _mmc.GAINS_GRID_OF_GRIDS if self.gains == "grid_of_grids" else _mmc.GAINS_SINGLE_IPC
        defaults = table.get(self.type, _mmc.GAINS_SINGLE_IPC[self.type])
        for k, v in defaults.items():
            if getattr(self, k) is None:
                object.__setattr__(self, k, v)
        if self.type == "energy_balancing" and not self.k_w_ac > self.k_p_ac:
            raise ValueError("energy_balancing requires k_w_ac > k_p_ac "
                             "(hypothesis of the stability theorem)")
        return self


class IpcCfg(_M):
    id: str
    bus: str
    node: str
    mmc: MmcCfg = MmcCfg()
    controller: ControllerCfg
    ac_connected: bool = True
    dc_connected: bool = True


ACTIONS = ("set_load", "set_setpoint", "disconnect_device", "reconnect_device",
           "disconnect_ipc_terminal", "reconnect_ipc_terminal")


class Event(_M):
    t: float = Field(ge=0)
    action: Literal["set_load", "set_setpoint", "disconnect_device", "reconnect_device",
                    "disconnect_ipc_terminal", "reconnect_ipc_terminal"]
    target: str
    field: Optional[str] = None
    side: Optional[Literal["ac", "dc"]] = None
    value: Optional[float] = None


class Options(_M):
    dt: float = Field(1e-4, gt=0)
    t_end: float = Field(1.0, gt=0)
    fidelity: Literal["analytic", "dynamic"] = "dynamic"
    record_every: int = Field(10, ge=1)
    init: Literal["equilibrium", "flat"] = "equilibrium"


# setpoint fields an event may touch, per target kind
DEVICE_FIELDS = {
    "ac_source": ("p_set", "e", "omega_set"),
    "pll_source": ("p",),
    "ac_load": ("p", "q"),
    "dc_source": ("p_set", "v_set"),
    "dc_load": ("p",),
}
IPC_FIELDS = ("omega_set", "v_dc_set", "p_ac_set", "p_dc_set", "q_set", "v_set", "w_set",
              "p_mmc_set")


class Scenario(_M):
    schema_id: Literal["gogsim/1"] = Field(SCHEMA_ID, alias="schema")
    name: str = ""
    description: str = ""
    base: Base = Base()
    ac_subgrids: list[AcGrid] = []
    dc_subgrids: list[DcGrid] = []
    devices: list[Device] = []
    ipcs: list[IpcCfg] = []
    events: list[Event] = []
    options: Options = Options()

    @model_validator(mode="after")
    def _check(self):
        buses = [b.id for g in self.ac_subgrids for b in g.buses]
        nodes = [n.id for g in self.dc_subgrids for n in g.nodes]
        _unique(buses, "AC bus")
        _unique(nodes, "DC node")
        _unique([g.id for g in self.ac_subgrids] + [g.id for g in self.dc_subgrids], "subgrid")
        _unique([d.id for d in self.devices] + [p.id for p in self.ipcs], "device/IPC")
        for g in self.ac_subgrids:
            ids = {b.id for b in g.buses}
            for k, br in enumerate(g.branches):
                if br.frm not in ids or br.to not in ids or br.frm == br.to:
                    raise ValueError(f"ac_subgrids[{g.id}].branches[{k}]: bad endpoints")
        for g in self.dc_subgrids:
            ids = {n.id for n in g.nodes}
            for k, s in enumerate(g.segments):
                if s.frm not in ids or s.to not in ids or s.frm == s.to:
                    raise ValueError(f"dc_subgrids[{g.id}].segments[{k}]: bad endpoints")
        for k, d in enumerate(self.devices):
            where = getattr(d, "bus", None) or getattr(d, "node", None)
            pool = buses if hasattr(d, "bus") else nodes
            if where not in pool:
                raise ValueError(f"devices[{k}] ({d.id}): unknown terminal {where!r}")
        for k, p in enumerate(self.ipcs):
            if p.bus not in buses:
                raise ValueError(f"ipcs[{k}] ({p.id}): unknown AC bus {p.bus!r}")
            if p.node not in nodes:
                raise ValueError(f"ipcs[{k}] ({p.id}): unknown DC node {p.node!r}")
        kinds = {d.id: d.kind for d in self.devices}
        ipcs = {p.id for p in self.ipcs}
        last = 0.0
        for k, ev in enumerate(self.events):
            _check_event(k, ev, kinds, ipcs)
            if ev.t < last:
                raise ValueError(f"events[{k}]: times must be non-decreasing")
            last = ev.t
        return self

    def device(self, did: str):
        for d in self.devices:
            if d.id == did:
                return d
        raise KeyError(did)

    def ipc(self, pid: str) -> IpcCfg:
        for p in self.ipcs:
            if p.id == pid:
                return p
        raise KeyError(pid)


def _unique(ids, what):
    seen = set()
    for i in ids:
        if i in seen:
            raise ValueError(f"duplicate {what} id {i!r}")
        seen.add(i)


def _check_event(k, ev, kinds, ipcs):
    tag = f"events[{k}]"
    if ev.target not in kinds and ev.target not in ipcs:
        raise ValueError(f"{tag}: unknown target {ev.target!r}")
    a = ev.action
    if a in ("disconnect_ipc_terminal", "reconnect_ipc_terminal"):
        if ev.target not in ipcs or ev.side is None:
            raise ValueError(f"{tag}: {a} needs an IPC target and a side")
    elif a in ("disconnect_device", "reconnect_device"):
        if ev.target not in kinds:
            raise ValueError(f"{tag}: {a} needs a device target")
    elif a == "set_load":
        if kinds.get(ev.target) not in ("ac_load", "dc_load", "pll_source") or ev.value is None:
            raise ValueError(f"{tag}: set_load needs a load or power source target and a value")
    elif a == "set_setpoint":
        allowed = IPC_FIELDS if ev.target in ipcs else DEVICE_FIELDS[kinds[ev.target]]
        if ev.field not in allowed or ev.value is None:
            raise ValueError(f"{tag}: field {ev.field!r} is not a setpoint of {ev.target!r}")
