"""Network topology, admittance assembly and the quasi-static AC solve.

AC subgrids are phasor networks of pi-lines; DC subgrids are cable
segments made of three parallel series-RL branches with shunt c and g.
Everything returned here is per-unit on the scenario base.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels_py
from .errors import (ConvergenceError, DisconnectedIslandError,
                     NoFormingDeviceError, ValidationError)
from .units import PerUnitBase

# Reference cable and line data (per km)
DC_CABLE_R = (0.1265, 0.1504, 0.0178)       # ohm/km
DC_CABLE_L = (0.2644e-3, 7.2865e-3, 3.6198e-3)  # H/km
DC_CABLE_C = 0.1616e-6                       # F/km
DC_CABLE_G = 0.1015e-6                       # S/km
AC_LINE_R = 0.08                             # ohm/km
AC_LINE_L = 0.8e-3                           # H/km
AC_LINE_C = 0.012e-6                         # F/km


@dataclass(frozen=True)
class AcBus:
    id: str
    shunt_c: float = 0.0  # F, lumped


@dataclass(frozen=True)
class AcBranch:
    frm: str
    to: str
    length_km: float
    r: float = AC_LINE_R
    l: float = AC_LINE_L
    c: float = AC_LINE_C

    def series_impedance_ohm(self, f_hz: float) -> complex:
        if not self.length_km > 0:
            raise ValidationError(f"AC branch {self.frm}-{self.to} has non-positive length")
        w = 2 * math.pi * f_hz
        return complex(self.r, w * self.l) * self.length_km


@dataclass(frozen=True)
class AcSubgrid:
    id: str
    buses: tuple[AcBus, ...]
    branches: tuple[AcBranch, ...] = ()

    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}


@dataclass(frozen=True)
class DcNode:
    id: str
    shunt_c: float = 0.0  # F, lumped (converter/station capacitance)


@dataclass(frozen=True)
class DcSegment:
    frm: str
    to: str
    length_km: float
    r: tuple[float, float, float] = DC_CABLE_R
    l: tuple[float, float, float] = DC_CABLE_L
    c: float = DC_CABLE_C
    g: float = DC_CABLE_G

    def parallel_resistance_ohm(self) -> float:
        return self.length_km / sum(1.0 / ri for ri in self.r)


@dataclass(frozen=True)
class DcSubgrid:
    id: str
    nodes: tuple[DcNode, ...]
    segments: tuple[DcSegment, ...] = ()

    def node_index(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}


@dataclass(frozen=True)
class NetworkModel:
    base: PerUnitBase
    ac_subgrids: tuple[AcSubgrid, ...] = ()
    dc_subgrids: tuple[DcSubgrid, ...] = ()
    fidelity: str = "dynamic"
    # ipc id -> (ac bus id, dc node id); filled from the scenario
    ipc_attachments: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fidelity not in ("analytic", "dynamic"):
            raise ValidationError(f"unknown fidelity {self.fidelity!r}")
        ac_ids = [b.id for g in self.ac_subgrids for b in g.buses]
        dc_ids = [n.id for g in self.dc_subgrids for n in g.nodes]
        for ids, kind in ((ac_ids, "AC bus"), (dc_ids, "DC node")):
            seen = set()
            for i in ids:
                if i in seen:
                    raise ValidationError(f"duplicate {kind} id {i!r}")
                seen.add(i)
        for ipc, (bus, node) in self.ipc_attachments.items():
            if bus not in ac_ids:
                raise ValidationError(f"IPC {ipc} attaches to unknown AC bus {bus!r}")
            if node not in dc_ids:
                raise ValidationError(f"IPC {ipc} attaches to unknown DC node {node!r}")

    def ac_locate(self, bus_id: str) -> tuple[int, int]:
        for k, g in enumerate(self.ac_subgrids):
            idx = g.bus_index()
            if bus_id in idx:
                return k, idx[bus_id]
        raise ValidationError(f"unknown AC bus {bus_id!r}")

    def dc_locate(self, node_id: str) -> tuple[int, int]:
        for k, g in enumerate(self.dc_subgrids):
            idx = g.node_index()
            if node_id in idx:
                return k, idx[node_id]
        raise ValidationError(f"unknown DC node {node_id!r}")


def _components(n: int, edges) -> list[int]:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return [find(i) for i in range(n)]


def build_admittance(subgrid: AcSubgrid, base: PerUnitBase, f: float = 1.0,
                     lossless: bool = False) -> np.ndarray:
    """Nodal admittance matrix of a pi-line network in pu.

    ``f`` is the frequency in pu of ``base.f_base``. With ``lossless`` the
    series resistances and all shunt capacitances are dropped, which is the
    power-angle network used in analytic mode.
    """
    if not f > 0:
        raise ValidationError("frequency must be positive")
    idx = subgrid.bus_index()
    n = len(idx)
    f_hz = f * base.f_base
    w = 2 * math.pi * f_hz
    zb = base.z_ac_base
    Y = np.zeros((n, n), dtype=complex)
    edges = []
    for br in subgrid.branches:
        if br.frm not in idx or br.to not in idx:
            raise ValidationError(f"branch {br.frm}-{br.to} references an unknown bus")
        if br.frm == br.to:
            raise ValidationError(f"branch {br.frm}-{br.to} is a self loop")
        z = br.series_impedance_ohm(f_hz) / zb
        if lossless:
            z = complex(0.0, z.imag)
        if not (br.r >= 0 and br.l > 0 and br.c >= 0):
            raise ValidationError(f"branch {br.frm}-{br.to} has invalid impedance data")
        y = 1.0 / z
        i, j = idx[br.frm], idx[br.to]
        Y[i, i] += y
        Y[j, j] += y
        Y[i, j] -= y
        Y[j, i] -= y
        if not lossless:
            ysh = 1j * w * br.c * br.length_km / 2 * zb
            Y[i, i] += ysh
            Y[j, j] += ysh
        edges.append((i, j))
    if not lossless:
        for b in subgrid.buses:
            Y[idx[b.id], idx[b.id]] += 1j * w * b.shunt_c * zb
    if n and len(set(_components(n, edges))) > 1:
        raise DisconnectedIslandError(f"AC subgrid {subgrid.id} is not connected")
    return Y


def dc_conductance_matrix(subgrid: DcSubgrid, base: PerUnitBase) -> np.ndarray:
    """Weighted Laplacian of the zero-frequency DC network (leakage excluded)."""
    idx = subgrid.node_index()
    n = len(idx)
    G = np.zeros((n, n))
    for seg in subgrid.segments:
        if not seg.length_km > 0:
            raise ValidationError(f"DC segment {seg.frm}-{seg.to} has non-positive length")
        if min(seg.r) <= 0 or min(seg.l) <= 0 or seg.c <= 0 or seg.g < 0:
            raise ValidationError(f"DC segment {seg.frm}-{seg.to} has invalid cable data")
        g = base.z_dc_base / seg.parallel_resistance_ohm()
        i, j = idx[seg.frm], idx[seg.to]
        G[i, i] += g
        G[j, j] += g
        G[i, j] -= g
        G[j, i] -= g
    return G


def dc_equivalent_conductance(subgrid: DcSubgrid, base: PerUnitBase,
                              frm: str, to: str) -> float:
    """Thevenin conductance between two DC nodes at zero frequency, in pu."""
    idx = subgrid.node_index()
    if frm not in idx or to not in idx:
        raise ValidationError(f"unknown DC node in {frm!r}-{to!r}")
    i, j = idx[frm], idx[to]
    if i == j:
        raise ValidationError("conductance requested between a node and itself")
    edges = [(idx[s.frm], idx[s.to]) for s in subgrid.segments]
    comp = _components(len(idx), edges)
    if comp[i] != comp[j]:
        raise DisconnectedIslandError(f"no DC path between {frm} and {to}")
    members = [k for k in range(len(idx)) if comp[k] == comp[i]]
    G = dc_conductance_matrix(subgrid, base)[np.ix_(members, members)]
    e = np.zeros(len(members))
    e[members.index(i)] = 1.0
    e[members.index(j)] = -1.0
    r_eff = e @ np.linalg.pinv(G) @ e
    return 1.0 / r_eff


@dataclass
class AcSolution:
    v: np.ndarray            # complex bus voltages
    p_src: np.ndarray        # active power injected by each voltage source
    q_src: np.ndarray
    p_gfl: np.ndarray        # active power injected by each current source
    iterations: int


def solve_ac_network(Y: np.ndarray, sources=(), loads=(), gfl=(),
                     v0: np.ndarray | None = None, tol: float = 1e-11,
                     max_iter: int = 30) -> AcSolution:
    """Newton solve of one AC subgrid.

    ``sources``: (bus, E, theta, z) voltage sources behind impedance z.
    ``loads``: (bus, P, Q) constant-power consumption.
    ``gfl``: (bus, P, theta) current sources with magnitude P/|V| at angle
    theta (a PLL-oriented grid-following injection).
    Powers follow the generator convention (injection > 0).
    """
    n = Y.shape[0]
    if not sources:
        raise NoFormingDeviceError("AC island has no voltage-forming device")
    Yeff = np.array(Y, dtype=complex)
    isrc = np.zeros(n, dtype=complex)
    for bus, E, th, z in sources:
        y = 1.0 / z
        Yeff[bus, bus] += y
        isrc[bus] += y * E * complex(math.cos(th), math.sin(th))
    sload = np.zeros(n, dtype=complex)
    for bus, P, Q in loads:
        sload[bus] += complex(P, Q)
    gb = np.array([g[0] for g in gfl], dtype=np.int64)
    gp = np.array([g[1] for g in gfl], dtype=float)
    gt = np.array([g[2] for g in gfl], dtype=float)
    v = np.ones(n, dtype=complex) if v0 is None else np.array(v0, dtype=complex)
    v, it, ok = _kernels_py.ac_newton(Yeff, isrc, sload, gb, gp, gt, v, tol, max_iter)
    if not ok:
        raise ConvergenceError(f"AC Newton did not converge in {max_iter} iterations")
    p_src, q_src = [], []
    for bus, E, th, z in sources:
        e = E * complex(math.cos(th), math.sin(th))
        s = e * np.conj((e - v[bus]) / z)
        p_src.append(s.real)
        q_src.append(s.imag)
    p_gfl = [(v[b] * np.conj(p / abs(v[b]) * complex(math.cos(t), math.sin(t)))).real
             for b, p, t in gfl]
    return AcSolution(v, np.array(p_src), np.array(q_src), np.array(p_gfl), it)
