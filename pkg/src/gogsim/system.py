"""Compile a validated :class:`~gogsim.scenario.Scenario` into flat arrays.

The kernels only see numpy arrays (see ``_layout``); this module owns the
mapping between those arrays and scenario ids: state labels, observable
names, connection flags and the event actions that mutate them.
"""
from __future__ import annotations

import math

import numpy as np

from . import network as net
from ._layout import (AC_GFM, DC_GFM, ENERGY_BAL, HYBRID, N_IPC_PAR, N_IPC_STATE,
                      N_OBS_DCSRC, N_OBS_IPC, N_OBS_PLL, N_OBS_SRC, P_KIW, P_KPAC,
                      P_KPDC, P_KPW, P_KQAC, P_KWAC, P_KWDC, P_LAG, P_PACSET, P_PDCSET,
                      P_PLLKI, P_PLLKP, P_QSET, P_TAUAC, P_TAUDC, P_TAUQ, P_VDCSET,
                      P_VSET, P_WSET, P_WTSET)
from .errors import ValidationError
from .kernels import make_kernel
from .units import PerUnitBase

# first-order lag of the MMC voltage commands in dynamic mode (s)
ACTUATION_LAG = 0.0

CTRL_CODE = {"ac_gfm": AC_GFM, "dc_gfm": DC_GFM, "hybrid_droop": HYBRID,
             "energy_balancing": ENERGY_BAL}

IPC_STATE_NAMES = {
    AC_GFM: ("W", "theta", "p_filt", "q_filt", "xi_w", "lag_pdc", None),
    DC_GFM: ("W", "theta_pll", "xi_pll", "xi_w", "z_dc", "lag_pac", "lag_vdc"),
    HYBRID: ("W", "theta", "q_filt", "z_dc", "lag_vdc", None, None),
    ENERGY_BAL: ("W", "theta", "q_filt", "m_ac", "m_dc", "lag_vdc", None),
}
IPC_OBS_NAMES = ("P_ac", "Q_ac", "P_dc", "omega", "V_dc", "E")
PAR_FIELD = {"omega_set": P_WSET, "v_dc_set": P_VDCSET, "p_ac_set": P_PACSET,
             "p_dc_set": P_PDCSET, "w_set": P_WTSET, "q_set": P_QSET, "v_set": P_VSET}

RK4_MARGIN = 2.5   # |lambda| * dt bound for the fastest cable mode


def net_model(sc, fidelity=None) -> net.NetworkModel:
    """Network topology objects (SI per-km data) for a scenario."""
    base = PerUnitBase(**sc.base.model_dump())
    acs = tuple(net.AcSubgrid(g.id, tuple(net.AcBus(b.id, b.shunt_c * 1e-6) for b in g.buses),
                              tuple(net.AcBranch(br.frm, br.to, br.length_km, br.r,
                                                 br.l * 1e-3, br.c * 1e-6) for br in g.branches))
                for g in sc.ac_subgrids)
    dcs = tuple(net.DcSubgrid(g.id, tuple(net.DcNode(n.id, n.shunt_c * 1e-6) for n in g.nodes),
                              tuple(net.DcSegment(s.frm, s.to, s.length_km, tuple(s.r),
                                                  tuple(x * 1e-3 for x in s.l), s.c * 1e-6,
                                                  s.g * 1e-6) for s in g.segments))
                for g in sc.dc_subgrids)
    return net.NetworkModel(base, acs, dcs, fidelity or sc.options.fidelity,
                            {p.id: (p.bus, p.node) for p in sc.ipcs})


def _i(v):
    return np.array(v, dtype=np.int64)


def _f(v):
    return np.array(v, dtype=float)


class System:
    """Flat, mutable image of a scenario for one simulation.

    Attributes of note: ``arrays`` (what the kernel reads), ``x0`` (flat
    initial guess), ``labels`` (state names), ``obs_names``.
    """

    def __init__(self, sc, fidelity=None, backend=None, lag=None):
        self.sc = sc
        self.fidelity = fidelity or sc.options.fidelity
        analytic = self.fidelity == "analytic"
        self.model = net_model(sc, self.fidelity)
        base = self.model.base
        self.base = base
        wb = base.omega_base
        zdc = base.z_dc_base
        if lag is None:
            lag = 0.0 if analytic else ACTUATION_LAG
        self.lag = lag

        # ---- buses / nodes
        self.bus_index, self.node_index = {}, {}
        acg_start, acg_len, dci_start, dci_len = [], [], [], []
        Ys = []
        for g in self.model.ac_subgrids:
            acg_start.append(len(self.bus_index))
            acg_len.append(len(g.buses))
            for b in g.buses:
                self.bus_index[b.id] = len(self.bus_index)
            Ys.append(net.build_admittance(g, base, lossless=analytic))
        nb = len(self.bus_index)
        Y = np.zeros((nb, nb), dtype=complex)
        for s0, n, y in zip(acg_start, acg_len, Ys):
            Y[s0:s0 + n, s0:s0 + n] = y
        for g in self.model.dc_subgrids:
            dci_start.append(len(self.node_index))
            dci_len.append(len(g.nodes))
            for n in g.nodes:
                self.node_index[n.id] = len(self.node_index)
        nd = len(self.node_index)
        Gd = np.zeros((nd, nd))
        d_C = np.zeros(nd)
        d_g = np.zeros(nd)
        segs = []
        for g, s0 in zip(self.model.dc_subgrids, dci_start):
            n = len(g.nodes)
            Gd[s0:s0 + n, s0:s0 + n] = net.dc_conductance_matrix(g, base)
            idx = g.node_index()
            for nd_ in g.nodes:
                d_C[s0 + idx[nd_.id]] += nd_.shunt_c * zdc
            for seg in g.segments:
                i, j = s0 + idx[seg.frm], s0 + idx[seg.to]
                segs.append((i, j, seg))
                if not analytic:
                    half_c = seg.c * seg.length_km / 2 * zdc
                    half_g = seg.g * seg.length_km / 2 * zdc
                    d_C[i] += half_c
                    d_C[j] += half_c
                    d_g[i] += half_g
                    d_g[j] += half_g
        self.ac_grid_of_bus = {}
        for k, g in enumerate(sc.ac_subgrids):
            for b in g.buses:
                self.ac_grid_of_bus[b.id] = k
        self.dc_grid_of_node = {}
        for k, g in enumerate(sc.dc_subgrids):
            for n in g.nodes:
                self.dc_grid_of_node[n.id] = k

        labels = []
        obs_names = []
        init = []

        def add_state(name, v0=0.0):
            labels.append(name)
            init.append(v0)
            return len(labels) - 1

        def add_obs(prefix, names):
            o = len(obs_names)
            obs_names.extend(f"{prefix}.{n}" for n in names)
            return o

        # ---- devices
        A = dict(s_bus=[], s_conn=[], s_yr=[], s_yi=[], s_E=[], s_x=[], s_wset=[], s_k=[],
                 s_pset=[], s_obs=[], g_bus=[], g_conn=[], g_P=[], g_x=[], g_kp=[], g_ki=[],
                 g_obs=[], l_bus=[], l_conn=[], l_P=[], l_Q=[], q_node=[], q_conn=[],
                 q_vset=[], q_k=[], q_pset=[], q_obs=[], m_node=[], m_conn=[], m_P=[])
        self.dev_slot = {}
        for d in sc.devices:
            if d.kind == "ac_source":
                z = complex(0.0 if analytic else d.r, d.x)
                y = 1 / z
                self.dev_slot[d.id] = ("s", len(A["s_bus"]))
                A["s_bus"].append(self.bus_index[d.bus])
                A["s_conn"].append(int(d.connected))
                A["s_yr"].append(y.real)
                A["s_yi"].append(y.imag)
                A["s_E"].append(d.e)
                A["s_x"].append(add_state(f"{d.id}.theta"))
                A["s_wset"].append(d.omega_set)
                A["s_k"].append(d.k)
                A["s_pset"].append(d.p_set)
                A["s_obs"].append(add_obs(d.id, ("P", "Q", "omega")))
            elif d.kind == "pll_source":
                self.dev_slot[d.id] = ("g", len(A["g_bus"]))
                A["g_bus"].append(self.bus_index[d.bus])
                A["g_conn"].append(int(d.connected))
                A["g_P"].append(d.p)
                A["g_x"].append(add_state(f"{d.id}.theta_pll"))
                add_state(f"{d.id}.xi_pll")
                A["g_kp"].append(d.kp)
                A["g_ki"].append(d.ki)
                A["g_obs"].append(add_obs(d.id, ("P", "omega", "V")))
            elif d.kind == "ac_load":
                self.dev_slot[d.id] = ("l", len(A["l_bus"]))
                A["l_bus"].append(self.bus_index[d.bus])
                A["l_conn"].append(int(d.connected))
                A["l_P"].append(d.p)
                A["l_Q"].append(d.q)
            elif d.kind == "dc_source":
                self.dev_slot[d.id] = ("q", len(A["q_node"]))
                A["q_node"].append(self.node_index[d.node])
                A["q_conn"].append(int(d.connected))
                A["q_vset"].append(d.v_set)
                A["q_k"].append(d.k)
                A["q_pset"].append(d.p_set)
                A["q_obs"].append(add_obs(d.id, ("P", "V")))
            else:
                self.dev_slot[d.id] = ("m", len(A["m_node"]))
                A["m_node"].append(self.node_index[d.node])
                A["m_conn"].append(int(d.connected))
                A["m_P"].append(d.p)

        # ---- IPCs
        ni = len(sc.ipcs)
        i_par = np.zeros((ni, N_IPC_PAR))
        I = dict(i_bus=[], i_node=[], i_type=[], i_x=[], i_acc=[], i_dcc=[], i_yr=[],
                 i_yi=[], i_obs=[])
        self.ipc_slot = {}
        self.w_nom = np.zeros(ni)
        for m, p in enumerate(sc.ipcs):
            c = p.controller
            typ = CTRL_CODE[c.type]
            prm = p.mmc.params()
            wnom = prm.w_nom_pu(base.s_base)
            self.w_nom[m] = wnom
            wt = c.w_set if c.w_set is not None else wnom
            z = prm.coupling_impedance(base.s_base)
            if analytic:
                z = complex(0.0, z.imag)
            y = 1 / z
            par = i_par[m]
            par[P_WSET], par[P_VDCSET], par[P_PACSET] = c.omega_set, c.v_dc_set, c.p_ac_set
            par[P_PDCSET], par[P_WTSET], par[P_QSET], par[P_VSET] = c.p_dc_set, wt, c.q_set, c.v_set
            par[P_KPAC], par[P_KQAC], par[P_KPDC] = c.k_p_ac, c.k_q_ac, c.k_p_dc
            # droop gains act on the energy error per unit of W_nom
            par[P_KWAC], par[P_KWDC] = c.k_w_ac / wnom, c.k_w_dc / wnom
            par[P_TAUAC], par[P_TAUDC], par[P_TAUQ] = c.tau_ac, c.tau_dc, c.tau_q
            par[P_KPW], par[P_KIW], par[P_PLLKP], par[P_PLLKI] = c.k_p_w, c.k_i_w, c.pll_kp, c.pll_ki
            par[P_LAG] = c.lag if c.lag is not None else lag
            self.ipc_slot[p.id] = m
            I["i_bus"].append(self.bus_index[p.bus])
            I["i_node"].append(self.node_index[p.node])
            I["i_type"].append(typ)
            I["i_acc"].append(int(p.ac_connected))
            I["i_dcc"].append(int(p.dc_connected))
            I["i_yr"].append(y.real)
            I["i_yi"].append(y.imag)
            names = IPC_STATE_NAMES[typ]
            x0 = len(labels)
            for k in range(N_IPC_STATE):
                add_state(f"{p.id}.{names[k] or 'spare%d' % k}")
            I["i_x"].append(x0)
            init[x0] = wt
            if typ == AC_GFM:
                init[x0 + 2] = c.p_ac_set
                init[x0 + 3] = c.q_set
                init[x0 + 5] = c.p_dc_set
            elif typ == DC_GFM:
                init[x0 + 5] = c.p_ac_set
                init[x0 + 6] = c.v_dc_set
            elif typ == HYBRID:
                init[x0 + 2] = c.q_set
                init[x0 + 4] = c.v_dc_set
            else:
                init[x0 + 2] = c.q_set
                init[x0 + 5] = c.v_dc_set
            I["i_obs"].append(add_obs(p.id, IPC_OBS_NAMES))

        # ---- DC dynamic states
        d_x = np.full(nd, -1, dtype=np.int64)
        sg = dict(sg_from=[], sg_to=[], sg_x=[])
        sg_R = np.zeros((len(segs), 3))
        sg_L = np.zeros((len(segs), 3))
        inv_node = {v: k for k, v in self.node_index.items()}
        if not analytic:
            for i in range(nd):
                d_x[i] = add_state(f"node.{inv_node[i]}.V_dc", 1.0)
            for k, (i, j, seg) in enumerate(segs):
                sg["sg_from"].append(i)
                sg["sg_to"].append(j)
                sg["sg_x"].append(add_state(f"cable.{inv_node[i]}-{inv_node[j]}.i1"))
                add_state(f"cable.{inv_node[i]}-{inv_node[j]}.i2")
                add_state(f"cable.{inv_node[i]}-{inv_node[j]}.i3")
                sg_R[k] = [r * seg.length_km / zdc for r in seg.r]
                sg_L[k] = [l_ * seg.length_km / zdc for l_ in seg.l]

        bus_obs0 = len(obs_names)
        inv_bus = {v: k for k, v in self.bus_index.items()}
        for b in range(nb):
            obs_names.extend((f"bus.{inv_bus[b]}.V", f"bus.{inv_bus[b]}.angle"))
        node_obs0 = len(obs_names)
        for i in range(nd):
            obs_names.append(f"node.{inv_node[i]}.V_dc")

        arrays = {k: (_i(v) if k.endswith(("_bus", "_conn", "_x", "_obs", "_node"))
                      else _f(v)) for k, v in A.items()}
        arrays.update({k: (_f(v) if k in ("i_yr", "i_yi") else _i(v)) for k, v in I.items()})
        arrays.update({k: _i(v) for k, v in sg.items()})
        arrays.update(
            i_par=i_par, sg_R=sg_R, sg_L=sg_L, d_x=d_x, d_C=d_C, d_g=d_g, Gd=Gd,
            Yr=np.ascontiguousarray(Y.real), Yi=np.ascontiguousarray(Y.imag),
            acg_start=_i(acg_start), acg_len=_i(acg_len), dci_start=_i(dci_start),
            dci_len=_i(dci_len), nx=_i([len(labels)]), nobs=_i([len(obs_names)]),
            wb=_f([wb]), analytic=_i([int(analytic)]), bus_obs0=_i([bus_obs0]),
            node_obs0=_i([node_obs0]), v_ac_init=np.ones(nb, dtype=complex),
            v_dc_init=np.ones(nd))
        self.arrays = arrays
        self.labels = labels
        self.obs_names = obs_names
        self.obs_index = {n: k for k, n in enumerate(obs_names)}
        self.state_index = {n: k for k, n in enumerate(labels)}
        self.x0 = _f(init)
        self._check_stiffness(sc.options.dt)
        self.kernel = make_kernel(arrays, backend)
        self.backend = self.kernel.backend

    # ------------------------------------------------------------------ #
    @property
    def nx(self):
        return len(self.labels)

    def _check_stiffness(self, dt):
        a = self.arrays
        if a["analytic"][0]:
            return
        for k in range(len(a["sg_from"])):
            i, j = a["sg_from"][k], a["sg_to"][k]
            c_eff = 1.0 / (1.0 / a["d_C"][i] + 1.0 / a["d_C"][j]) if a["d_C"][i] > 0 and a["d_C"][j] > 0 else 0.0
            for q in range(3):
                L, R = a["sg_L"][k, q], a["sg_R"][k, q]
                lam = R / L + (1.0 / math.sqrt(L * c_eff) if c_eff > 0 else 0.0)
                if lam * dt > RK4_MARGIN:
                    raise ValidationError(
                        f"dt={dt:g} s too large for cable {self.labels[a['sg_x'][k]][:-3]} "
                        f"(fastest mode {lam:.3g} 1/s); use dt <= {RK4_MARGIN / lam:.2e}")
        for i, C in enumerate(a["d_C"]):
            if not C > 0:
                raise ValidationError(f"DC node {self.labels[a['d_x'][i]]} has no capacitance "
                                      "in dynamic mode (attach a cable or a shunt)")

    def forming_dc_nodes(self):
        a = self.arrays
        f = np.zeros(len(a["d_C"]), dtype=bool)
        for j in range(len(a["q_node"])):
            if a["q_conn"][j]:
                f[a["q_node"][j]] = True
        for m in range(len(a["i_node"])):
            if a["i_dcc"][m] and a["i_type"][m] != AC_GFM:
                f[a["i_node"][m]] = True
        return f

    def active_mask(self):
        """States that actually evolve under the current connection flags."""
        a = self.arrays
        act = np.zeros(self.nx, dtype=bool)
        for j in range(len(a["s_x"])):
            act[a["s_x"][j]] = bool(a["s_conn"][j])
        for j in range(len(a["g_x"])):
            act[a["g_x"][j]] = act[a["g_x"][j] + 1] = bool(a["g_conn"][j])
        for m in range(len(a["i_x"])):
            o, par, typ = a["i_x"][m], a["i_par"][m], a["i_type"][m]
            lag = par[P_LAG] > 0
            use = {AC_GFM: (1, 1, par[P_TAUAC] > 0, 1, 1, lag, 0),
                   DC_GFM: (1, 1, 1, 1, par[P_TAUDC] > 0, lag, lag),
                   HYBRID: (1, 1, 1, par[P_TAUDC] > 0, lag, 0, 0),
                   ENERGY_BAL: (1, 1, 1, par[P_TAUAC] > 0, par[P_TAUDC] > 0, lag, 0)}[typ]
            for k in range(N_IPC_STATE):
                act[o + k] = bool(use[k])
        if not a["analytic"][0]:
            form = self.forming_dc_nodes()
            for i, xi in enumerate(a["d_x"]):
                act[xi] = not form[i]
            for xs in a["sg_x"]:
                act[xs:xs + 3] = True
        return act

    def angle_pins(self):
        """One forming-device angle per energized AC subgrid (reference)."""
        a = self.arrays
        pins = []
        for k, s0 in enumerate(a["acg_start"]):
            n = a["acg_len"][k]
            cand = [a["s_x"][j] for j in range(len(a["s_bus"]))
                    if a["s_conn"][j] and s0 <= a["s_bus"][j] < s0 + n]
            cand += [a["i_x"][m] + 1 for m in range(len(a["i_bus"]))
                     if a["i_acc"][m] and a["i_type"][m] != DC_GFM and s0 <= a["i_bus"][m] < s0 + n]
            if cand:
                pins.append(cand[0])
        return pins

    def angle_groups(self):
        """Connected angle states per AC subgrid, reference (pinned) first."""
        a = self.arrays
        pins = set(self.angle_pins())
        groups = []
        for k, s0 in enumerate(a["acg_start"]):
            n = a["acg_len"][k]
            inside = lambda b: s0 <= b < s0 + n
            g = [a["s_x"][j] for j in range(len(a["s_bus"]))
                 if a["s_conn"][j] and inside(a["s_bus"][j])]
            g += [a["i_x"][m] + 1 for m in range(len(a["i_bus"]))
                  if a["i_acc"][m] and inside(a["i_bus"][m])]
            g += [a["g_x"][j] for j in range(len(a["g_bus"]))
                  if a["g_conn"][j] and inside(a["g_bus"][j])]
            g = sorted(int(i) for i in g)
            ref = [i for i in g if i in pins]
            if ref:
                g.remove(ref[0])
                groups.append([ref[0]] + g)
        return groups

    def synchronous_residual(self, dx):
        """Active derivatives seen from a frame rotating with each AC subgrid.

        Angle rates are taken relative to the subgrid reference, whose own
        rate (the common frequency offset) is dropped.
        """
        dx = np.array(dx, dtype=float)
        act = self.active_mask().copy()
        for g in self.angle_groups():
            dx[g[1:]] -= dx[g[0]]
            act[g[0]] = False
        return dx[act]

    # ------------------------------------------------------------------ #
    def rhs(self, x, t=0.0):
        """Derivatives and observables at ``x``; raises on a network failure."""
        from ._layout import REASONS
        dx = np.zeros(self.nx)
        xx = np.array(x, dtype=float)
        st = self.kernel.rhs(t, xx, dx)
        if st != 0:
            from .errors import NetworkError
            raise NetworkError(REASONS.get(st, f"status {st}"))
        return dx, self.kernel.obs.copy()

    def obs(self, name, obs):
        return obs[self.obs_index[name]]

    # ------------------------------------------------------------------ #
    def apply_event(self, ev, x):
        """Mutate arrays (and, for resynchronisation, ``x``) for one event."""
        a = self.arrays
        tgt = ev.target
        if tgt in self.ipc_slot:
            m = self.ipc_slot[tgt]
            if ev.action == "set_setpoint":
                if ev.field == "p_mmc_set":
                    a["i_par"][m, P_PACSET] = a["i_par"][m, P_PDCSET] = ev.value
                else:
                    a["i_par"][m, PAR_FIELD[ev.field]] = ev.value
            else:
                on = ev.action.startswith("reconnect")
                key = "i_acc" if ev.side == "ac" else "i_dcc"
                if on and not a[key][m] and ev.side == "ac":
                    o = a["i_x"][m]
                    x[o + 1] = self._bus_angle(a["i_bus"][m])
                a[key][m] = int(on)
        else:
            kind, j = self.dev_slot[tgt]
            if ev.action == "set_load" or ev.action == "set_setpoint":
                fld = ev.field or "p"
                key = {("l", "p"): "l_P", ("l", "q"): "l_Q", ("m", "p"): "m_P", ("g", "p"): "g_P",
                       ("s", "p_set"): "s_pset", ("s", "e"): "s_E", ("s", "omega_set"): "s_wset",
                       ("q", "p_set"): "q_pset", ("q", "v_set"): "q_vset"}.get((kind, fld))
                if key is None:
                    raise ValidationError(f"cannot set {fld!r} on {tgt!r}")
                a[key][j] = ev.value
            else:
                on = ev.action == "reconnect_device"
                ck = kind + "_conn"
                if on and not a[ck][j]:
                    if kind == "s":
                        x[a["s_x"][j]] = self._bus_angle(a["s_bus"][j])
                    elif kind == "g":
                        x[a["g_x"][j]] = self._bus_angle(a["g_bus"][j])
                a[ck][j] = int(on)
        self.resync_dc(x)

    def _bus_angle(self, b):
        v = self.kernel.Vac[b]
        return math.atan2(v.imag, v.real) if abs(v) > 1e-9 else 0.0

    def resync_dc(self, x):
        """Held node states take the last algebraic voltage of forming nodes."""
        a = self.arrays
        if a["analytic"][0]:
            return
        form = self.forming_dc_nodes()
        for i, xi in enumerate(a["d_x"]):
            if form[i]:
                x[xi] = self.kernel.Vdc[i]

    def set_param(self, spec, value):
        """Set a named scalar: ``ipc:<id>.<field>`` or ``<device>.<field>``."""
        from .scenario import Event
        tgt, fld = spec.split(".", 1)
        ev = Event(t=0.0, action="set_setpoint", target=tgt, field=fld, value=value)
        self.apply_event(ev, np.zeros(self.nx))

    def get_param(self, spec):
        a = self.arrays
        tgt, fld = spec.split(".", 1)
        if tgt in self.ipc_slot:
            m = self.ipc_slot[tgt]
            return a["i_par"][m, PAR_FIELD["p_ac_set" if fld == "p_mmc_set" else fld]]
        kind, j = self.dev_slot[tgt]
        key = {("l", "p"): "l_P", ("l", "q"): "l_Q", ("m", "p"): "m_P", ("g", "p"): "g_P",
               ("s", "p_set"): "s_pset", ("s", "e"): "s_E", ("s", "omega_set"): "s_wset",
               ("q", "p_set"): "q_pset", ("q", "v_set"): "q_vset"}[(kind, fld)]
        return a[key][j]
