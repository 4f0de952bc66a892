"""Regenerate the bundled scenario files.

Run from the repository root: ``python tools/make_scenarios.py``.
"""
import copy
import pathlib

import yaml

from gogsim.dispatch import DispatchProblem, solve_dispatch
from gogsim.scenario import Scenario

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "gogsim" / "scenarios"
P_MMC0 = 0.33                # tabulated initial MMC transfer (rounded)
V4_P0 = 0.5
# setpoints left free when dispatching each controller's initial point
FREE = {
    "energy_balancing": ["V4.p_set"],
    "hybrid_droop": ["V4.p_set", "MMC.p_mmc_set"],
    "ac_gfm": ["MMC.p_mmc_set"],
    "dc_gfm": ["MMC.p_mmc_set", "V4.p_set"],
}

HEADER = """# Single-IPC test system: one AC grid (U1 droop source, P2 grid-following
# source, L3 load), one DC grid (V4 droop source, L5 load) and one 500 MW
# MMC between bus b3 and node n6. Initial loads and setpoints are the
# initial row of the reference dispatch table; line and cable lengths are
# representative choices. V4.p_set and the MMC power setpoint are dispatch
# solutions for a lossless MMC (gogsim dispatch reproduces them).
# Events: the reference setpoint schedule, then {tail}.
"""

BASE = {
    "schema": "gogsim/1",
    "base": {"s_base": 500, "v_ac_base": 320, "v_dc_base": 640, "f_base": 50},
    "ac_subgrids": [{"id": "AC", "buses": [{"id": "b1"}, {"id": "b2"}, {"id": "b3"}],
                     "branches": [{"from": "b1", "to": "b3", "length_km": 100},
                                  {"from": "b2", "to": "b3", "length_km": 50}]}],
    "dc_subgrids": [{"id": "DC", "nodes": [{"id": "n4"}, {"id": "n5"}, {"id": "n6"}],
                     "segments": [{"from": "n4", "to": "n6", "length_km": 100},
                                  {"from": "n5", "to": "n6", "length_km": 50}]}],
    "devices": [
        {"kind": "ac_source", "id": "U1", "bus": "b1", "p_set": 0.15, "e": 1.0, "k": 0.02},
        {"kind": "pll_source", "id": "P2", "bus": "b2", "p": 0.35},
        {"kind": "ac_load", "id": "L3", "bus": "b3", "p": 0.82},
        {"kind": "dc_source", "id": "V4", "node": "n4", "p_set": V4_P0, "v_set": 1.0, "k": 0.02},
        {"kind": "dc_load", "id": "L5", "node": "n5", "p": 0.1},
    ],
}


def ev(t, action, target, field=None, value=None, side=None):
    e = {"t": t, "action": action, "target": target}
    if field is not None:
        e["field"] = field
    if value is not None:
        e["value"] = value
    if side is not None:
        e["side"] = side
    return e


SCHEDULE = [
    ev(0.0, "set_load", "L5", value=0.5),
    ev(0.3, "set_load", "L3", value=1.2),
    ev(0.6, "set_load", "L3", value=0.94),
    ev(0.6, "set_load", "L5", value=0.2),
    ev(1.0, "set_setpoint", "U1", "p_set", 0.35),
    ev(1.0, "set_setpoint", "MMC", "p_mmc_set", 0.25),
    ev(1.5, "set_setpoint", "U1", "e", 0.9),
    ev(2.0, "set_setpoint", "V4", "v_set", 0.98),
    ev(2.5, "set_setpoint", "U1", "e", 1.0),
    ev(2.5, "set_setpoint", "V4", "v_set", 1.0),
    ev(3.0, "set_setpoint", "MMC", "p_mmc_set", -0.2),
    ev(3.5, "set_setpoint", "MMC", "omega_set", 0.98),
    ev(3.5, "set_setpoint", "MMC", "v_dc_set", 1.03),
    ev(4.0, "set_setpoint", "MMC", "p_mmc_set", 0.25),
    ev(4.0, "set_setpoint", "MMC", "omega_set", 1.0),
    ev(4.0, "set_setpoint", "MMC", "v_dc_set", 1.0),
]
TAILS = {
    "dc_loss": ([ev(4.5, "disconnect_device", "V4")], "V4 (the DC forming source) trips at 4.5 s"),
    "ac_loss": ([ev(5.5, "disconnect_device", "U1")], "U1 (the AC forming source) trips at 5.5 s"),
}


def controller(kind):
    c = {"type": kind}
    if kind != "energy_balancing":
        c["p_ac_set"] = c["p_dc_set"] = P_MMC0
    return c


def scenario(kind, events, name):
    d = copy.deepcopy(BASE)
    d["name"] = name
    d["ipcs"] = [{"id": "MMC", "bus": "b3", "node": "n6", "controller": controller(kind)}]
    d["events"] = []
    d["options"] = {"dt": 1.0e-4, "t_end": 6.0, "fidelity": "dynamic", "record_every": 10}
    sol = solve_dispatch(DispatchProblem(Scenario.model_validate(d), FREE[kind]))
    for spec, val in sol.setpoints.items():
        tgt, fld = spec.split(".")
        val = round(val, 12)
        if tgt == "MMC":
            d["ipcs"][0]["controller"].update(p_ac_set=val, p_dc_set=val)
        else:
            next(x for x in d["devices"] if x["id"] == tgt)[fld] = val
    d["events"] = events
    return d


def dump(d, header):
    text = yaml.safe_dump(d, sort_keys=False, default_flow_style=None, width=100)
    (OUT / f"{d['name']}.yaml").write_text(header + text)


# ---------------------------------------------------------------------- #
# Two AC grids joined by two DC grids through four energy-balancing IPCs:
# IPC1 (AC1-DC1), IPC2 (AC2-DC1), IPC3 (AC1-DC2), IPC4 (AC2-DC2).
FOUR_HEADER = """# Gain-consistency system: AC grids AC1 and AC2 joined by two DC grids,
# DC1 (IPC1 at AC1, IPC2 at AC2) and DC2 (IPC3 at AC1, IPC4 at AC2), all
# four IPCs under energy-balancing control (grid-of-grids gain set). Each AC grid has one droop
# source and one load. Lengths are representative.
# alpha = k_w_ac / k_w_dc per IPC: {alphas}.
# The initial point is dispatched (U1 covers losses, IPC1 and IPC3 DC
# voltage setpoints split the exchange evenly over both DC grids).
# Event: AC2 load step of +0.1 pu at t = 0.1 s.
"""


def four_ipc(name, k_w_dc3=0.4):
    # grid-of-grids gains: the DC grids are formed by IPCs only, which
    # needs the faster DC filter of that set
    ipc = lambda i, bus, node, kwd=0.4: {
        "id": f"IPC{i}", "bus": bus, "node": node,
        "controller": {"type": "energy_balancing", "gains": "grid_of_grids",
                       "k_w_ac": 0.4, "k_w_dc": kwd}}
    d = {
        "schema": "gogsim/1", "name": name,
        "base": {"s_base": 500, "v_ac_base": 320, "v_dc_base": 640, "f_base": 50},
        "ac_subgrids": [
            {"id": "AC1", "buses": [{"id": "a1"}, {"id": "a2"}, {"id": "a3"}],
             "branches": [{"from": "a1", "to": "a2", "length_km": 60},
                          {"from": "a1", "to": "a3", "length_km": 80}]},
            {"id": "AC2", "buses": [{"id": "c1"}, {"id": "c2"}, {"id": "c3"}],
             "branches": [{"from": "c1", "to": "c2", "length_km": 60},
                          {"from": "c1", "to": "c3", "length_km": 80}]}],
        "dc_subgrids": [
            {"id": "DC1", "nodes": [{"id": "d1"}, {"id": "d2"}],
             "segments": [{"from": "d1", "to": "d2", "length_km": 150}]},
            {"id": "DC2", "nodes": [{"id": "e1"}, {"id": "e2"}],
             "segments": [{"from": "e1", "to": "e2", "length_km": 100}]}],
        "devices": [
            {"kind": "ac_source", "id": "U1", "bus": "a1", "p_set": 0.5, "e": 1.0, "k": 0.02},
            {"kind": "ac_load", "id": "L1", "bus": "a1", "p": 0.6},
            {"kind": "ac_source", "id": "U2", "bus": "c1", "p_set": 0.5, "e": 1.0, "k": 0.02},
            {"kind": "ac_load", "id": "L2", "bus": "c1", "p": 0.4}],
        "ipcs": [ipc(1, "a2", "d1"), ipc(2, "c2", "d2"), ipc(3, "a3", "e1", k_w_dc3),
                 ipc(4, "c3", "e2")],
        "events": [],
        "options": {"dt": 1.0e-4, "t_end": 3.0, "fidelity": "dynamic", "record_every": 10},
    }
    free = ["U1.p_set", "IPC1.v_dc_set", "IPC3.v_dc_set"]
    sol = solve_dispatch(DispatchProblem(Scenario.model_validate(d), free,
                                         {"IPC1.P_ac": 0.05}))
    for spec, val in sol.setpoints.items():
        _put(d, spec, round(val, 12))
    d["events"] = [ev(0.1, "set_load", "L2", value=0.5)]
    alphas = ", ".join(f"{p['id']} {p['controller']['k_w_ac'] / p['controller']['k_w_dc']:g}"
                       for p in d["ipcs"])
    return d, FOUR_HEADER.format(alphas=alphas)


def _put(d, spec, val):
    tgt, fld = spec.split(".", 1)
    for x in d["devices"]:
        if x["id"] == tgt:
            x[fld] = val
            return
    for p in d["ipcs"]:
        if p["id"] == tgt:
            if fld == "p_mmc_set":
                p["controller"].update(p_ac_set=val, p_dc_set=val)
            else:
                p["controller"][fld] = val
            return
    raise KeyError(spec)


# ---------------------------------------------------------------------- #
# Grid of grids: three AC and two DC subgrids, six 1000 MW IPCs.
GOG_HEADER = """# Grid of grids: AC1 (U1 droop source), AC2 (U2 droop source) and AC3
# (grid-following generation only, wind farm W3), each with one
# grid-following source and one load; DC1 joins IPCs A (AC1), B (AC2),
# C (AC3), DC2 joins IPCs D (AC1), E (AC3), F (AC2). Six 1000 MW MMCs
# under {ctl} control with the grid-of-grids gain set. Lengths and
# the initial dispatch are representative choices; setpoints marked as
# dispatched are solutions of gogsim dispatch.
# Events: 0.2 s wind drop to 10 MW; 1.2 s U2 raised by the same 265 MW;
# 2.2 s DC setpoints{hd} redispatched for zero transfer through DC1
# (U2 trimmed by the change in losses);
# 4.2 s U1 trips; 5.2 s AC side of IPC D opens.
"""
GOG_IPCS = [("A", "g4", "m1"), ("B", "h4", "m2"), ("C", "k4", "m3"),
            ("D", "g5", "n1"), ("E", "k5", "n2"), ("F", "h5", "n3")]


def _ac(gid, p):
    return {"id": gid, "buses": [{"id": f"{p}{i}"} for i in range(1, 6)],
            "branches": [{"from": f"{p}1", "to": f"{p}3", "length_km": 80},
                         {"from": f"{p}2", "to": f"{p}3", "length_km": 60},
                         {"from": f"{p}3", "to": f"{p}4", "length_km": 50},
                         {"from": f"{p}3", "to": f"{p}5", "length_km": 70}]}


def _dc(gid, p, lengths):
    return {"id": gid, "nodes": [{"id": f"{p}{i}"} for i in range(1, 4)],
            "segments": [{"from": f"{p}1", "to": f"{p}3", "length_km": lengths[0]},
                         {"from": f"{p}2", "to": f"{p}3", "length_km": lengths[1]}]}


def _solve(d, free, targets=None):
    sol = solve_dispatch(DispatchProblem(Scenario.model_validate(d), free, targets or {}))
    return {k: round(v, 12) + 0.0 for k, v in sol.setpoints.items()}


# initial injections (pu on 1000 MW); U1 is re-solved to cover losses
GOG_P = {"U1": 0.1, "S1": 0.65, "L1": 0.9, "U2": 0.01, "S2": 0.2, "L2": 0.485,
         "W3": 0.275, "S3": 0.4, "L3": 0.2}
GOG_TARGETS = {"A.P_ac": 0.1, "B.P_ac": -0.05}


def grid_of_grids(kind, p=GOG_P, targets=GOG_TARGETS):
    ctl = {"type": kind, "gains": "grid_of_grids"}
    d = {
        "schema": "gogsim/1", "name": f"grid_of_grids_{kind}",
        "base": {"s_base": 1000, "v_ac_base": 320, "v_dc_base": 640, "f_base": 50},
        "ac_subgrids": [_ac("AC1", "g"), _ac("AC2", "h"), _ac("AC3", "k")],
        "dc_subgrids": [_dc("DC1", "m", (120, 100)), _dc("DC2", "n", (150, 130))],
        "devices": [
            {"kind": "ac_source", "id": "U1", "bus": "g1", "p_set": p["U1"], "e": 1.0,
             "k": 0.02},
            {"kind": "pll_source", "id": "S1", "bus": "g2", "p": p["S1"]},
            {"kind": "ac_load", "id": "L1", "bus": "g3", "p": p["L1"]},
            {"kind": "ac_source", "id": "U2", "bus": "h1", "p_set": p["U2"], "e": 1.0,
             "k": 0.02},
            {"kind": "pll_source", "id": "S2", "bus": "h2", "p": p["S2"]},
            {"kind": "ac_load", "id": "L2", "bus": "h3", "p": p["L2"]},
            {"kind": "pll_source", "id": "W3", "bus": "k1", "p": p["W3"]},
            {"kind": "pll_source", "id": "S3", "bus": "k2", "p": p["S3"]},
            {"kind": "ac_load", "id": "L3", "bus": "k3", "p": p["L3"]},
        ],
        "ipcs": [{"id": i, "bus": b, "node": n, "mmc": {"s_rated": 1000},
                  "controller": dict(ctl)} for i, b, n in GOG_IPCS],
        "events": [],
        "options": {"dt": 1.0e-4, "t_end": 7.0, "fidelity": "dynamic", "record_every": 10},
    }
    hd = kind == "hybrid_droop"
    pset = [f"{i}.p_mmc_set" for i, _, _ in GOG_IPCS] if hd else []
    vset = ["A.v_dc_set", "B.v_dc_set", "D.v_dc_set", "F.v_dc_set"]
    # initial point: U1 covers losses; share of the imports fixed by targets
    for k, v in _solve(d, ["U1.p_set"] + vset + pset,
                       targets).items():
        _put(d, k, v)
    # U2 takes over the 265 MW lost by the wind farm
    d2 = copy.deepcopy(d)
    next(x for x in d2["devices"] if x["id"] == "W3")["p"] = 0.01
    u2 = round(d["devices"][3]["p_set"] + 0.265, 12)
    _put(d2, "U2.p_set", u2)
    # zero transfer into AC1 and AC2 through DC1 (C supplies the cable
    # leakage); U2 absorbs the change in losses
    red = _solve(d2, ["U2.p_set"] + vset + pset, {"A.P_dc": 0.0, "B.P_dc": 0.0})
    evs = [ev(0.2, "set_load", "W3", value=0.01),
           ev(1.2, "set_setpoint", "U2", "p_set", u2)]
    for k, v in red.items():
        tgt, fld = k.split(".")
        evs.append(ev(2.2, "set_setpoint", tgt, fld, v))
    evs += [ev(4.2, "disconnect_device", "U1"),
            ev(5.2, "disconnect_ipc_terminal", "D", side="ac")]
    d["events"] = evs
    return d, GOG_HEADER.format(ctl=kind.replace("_", " "),
                                hd=" and power setpoints" if hd else "")


def main():
    for kind in ("energy_balancing", "hybrid_droop"):
        dump(*grid_of_grids(kind))
    dump(*four_ipc("four_ipc_consistent"))
    dump(*four_ipc("four_ipc_inconsistent", k_w_dc3=0.2))
    for kind in ("ac_gfm", "dc_gfm", "hybrid_droop", "energy_balancing"):
        for tag, (tail, words) in TAILS.items():
            d = scenario(kind, SCHEDULE + tail, f"single_ipc_{kind}_{tag}")
            dump(d, HEADER.format(tail=words))
    d = scenario("energy_balancing", SCHEDULE[:1], "single_ipc_energy_balancing")
    d["options"]["t_end"] = 2.0
    dump(d, HEADER.replace("Events: the reference setpoint schedule, then {tail}.",
                           "Event: the +0.4 pu DC load step of L5 at t = 0."))


if __name__ == "__main__":
    main()
