"""Small-signal analysis.

Closed-form linearisations of the single-IPC system for both dual-port
controls, an eigenvalue certificate, the randomized stability sweep,
finite-difference Jacobians of the full simulator, the steady-state
relations of the two controls and the alpha-ratio consistency audit for
meshed grids of grids.
"""
from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._layout import ENERGY_BAL, HYBRID, P_KPAC, P_KPDC, P_KWAC, P_KWDC
from .errors import NotAtEquilibrium, ValidationError

MARGIN = 1e-9
CONNECTIONS = ("ac_only", "dc_only", "both")
CONTROLS = ("hybrid_droop", "energy_balancing")
DEFAULT_RANGES = {
    "b_ac": (1.0, 50.0),
    "g_dc": (5.0, 200.0),
    "k_ac": (0.01, 0.2),
    "k_dc": (0.01, 0.2),
    "k_p_ac": (0.01, 0.2),
    "k_p_dc": (0.01, 0.2),
    "k_w_ac": (0.1, 1.0),
    "k_w_dc": (0.1, 1.0),
}


@dataclass
class LinearModel:
    A: np.ndarray
    labels: list
    provenance: str                 # "analytic_closed_form" | "numeric_jacobian"
    snapshot: object = field(default=None, repr=False)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n, m = self.A.shape
        if n != m:
            raise ValueError(f"state matrix must be square, got {self.A.shape}")
        if len(self.labels) != n:
            raise ValueError(f"{len(self.labels)} labels for a {n}x{n} matrix")
        if not np.all(np.isfinite(self.A)):
            raise ValueError("state matrix has non-finite entries")


@dataclass
class StabilityReport:
    eigenvalues: list
    max_real: float
    verdict: str                    # "stable" | "marginal" | "unstable"
    routh_hurwitz: dict | None = None

    def as_dict(self):
        return {"eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
                "max_real": self.max_real, "verdict": self.verdict,
                "routh_hurwitz": self.routh_hurwitz}


def _need(params, keys):
    missing = [k for k in keys if k not in params]
    if missing:
        raise ValidationError(f"missing parameters {missing}")
    return [float(params[k]) for k in keys]


def _connection_checks(connection, b, g):
    if connection not in CONNECTIONS:
        raise ValidationError(f"connection must be one of {CONNECTIONS}, got {connection!r}")
    if connection in ("ac_only", "both") and not b > 0:
        raise ValidationError("b_ac must be positive when the AC side is connected")
    if connection in ("dc_only", "both") and not g > 0:
        raise ValidationError("g_dc must be positive when the DC side is connected")


def kappa_dc(g_dc, k_dc, k_p_dc, k_w_dc):
    """Net DC energy feedback of hybrid droop through the cable and DC source."""
    return g_dc * k_w_dc / (1.0 + g_dc * k_dc + g_dc * k_p_dc)


def gamma_dc(g_dc, k_dc):
    """Cable conductance in series with the DC source droop."""
    return g_dc * (1.0 - k_dc * g_dc / (k_dc * g_dc + 1.0))


def closed_loop_hybrid(params, connection="both", omega_base=1.0) -> LinearModel:
    """Hybrid power/energy droop on one AC droop source and one DC droop source.

    States ``(delta, dW)`` with ``delta`` the angle of the MMC relative to
    the AC source. ``omega_base`` multiplies the frequency gains so the
    matrix is in per-second units of a simulator that integrates
    ``d theta/dt = omega_b (omega - 1)``.
    """
    b, g = float(params.get("b_ac", 0.0)), float(params.get("g_dc", 0.0))
    _connection_checks(connection, b, g)
    kpa, kwa, kac = (omega_base * v for v in _need(params, ("k_p_ac", "k_w_ac", "k_ac")))
    kpd, kwd, kdc = _need(params, ("k_p_dc", "k_w_dc", "k_dc"))
    kap = 0.0 if connection == "ac_only" else kappa_dc(g, kdc, kpd, kwd)
    if connection == "dc_only":
        return LinearModel([[-kap]], ["dW"], "analytic_closed_form")
    A = [[-(kpa + kac) * b, kwa], [-b, -kap]]
    return LinearModel(A, ["delta", "dW"], "analytic_closed_form")


def closed_loop_energy_balancing(params, connection="both", omega_base=1.0) -> LinearModel:
    """Energy-balancing control in the shifted angle ``vartheta = delta - k_p^ac dW``."""
    b, g = float(params.get("b_ac", 0.0)), float(params.get("g_dc", 0.0))
    _connection_checks(connection, b, g)
    kpa, kwa, kac = (omega_base * v for v in _need(params, ("k_p_ac", "k_w_ac", "k_ac")))
    kpd, kwd, kdc = _need(params, ("k_p_dc", "k_w_dc", "k_dc"))
    gam = 0.0 if connection == "ac_only" else gamma_dc(g, kdc)
    den = 1.0 + gam * kpd
    if connection == "dc_only":
        return LinearModel([[-gam * kwd / den]], ["dW"], "analytic_closed_form")
    A = [[-kac * b, kwa - kac * b * kpa],
         [-b / den, -(gam * kwd + b * kpa) / den]]
    return LinearModel(A, ["vartheta", "dW"], "analytic_closed_form")


def closed_loop(control, params, connection="both", omega_base=1.0) -> LinearModel:
    if control == "hybrid_droop":
        return closed_loop_hybrid(params, connection, omega_base)
    if control == "energy_balancing":
        return closed_loop_energy_balancing(params, connection, omega_base)
    raise ValidationError(f"no closed form for control {control!r}")


def _verdict(max_real, margin=MARGIN):
    if max_real > margin:
        return "unstable"
    if max_real >= -margin:
        return "marginal"
    return "stable"


def certify(model: LinearModel, margin=MARGIN) -> StabilityReport:
    """Eigenvalue verdict; 2x2 models also carry the trace/determinant test."""
    A = model.A
    lam = np.linalg.eigvals(A)
    mr = float(np.max(lam.real)) if lam.size else -np.inf
    rh = None
    if A.shape == (2, 2):
        tr, det = float(np.trace(A)), float(np.linalg.det(A))
        rh = {"trace": tr, "det": det, "trace_negative": tr < 0, "det_positive": det > 0}
    return StabilityReport(list(lam), mr, _verdict(mr, margin), rh)


# ---------------------------------------------------------------------- #
def _draw(rng, ranges):
    return {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in ranges.items()}


def theorem1_sweep(n_draws=1000, seed=42, ranges=None, extra_draws=()):
    """Randomized check that every positive draw is stable in all six cases.

    Energy-balancing draws are redrawn (for ``k_w^ac``) until
    ``k_w^ac > k_p^ac``; draws passed through ``extra_draws`` that violate
    this are reported as outside the hypothesis instead of being judged.
    """
    t0 = time.perf_counter()
    ranges = {**DEFAULT_RANGES, **(ranges or {})}
    for k, (lo, hi) in ranges.items():
        if not (0 < lo <= hi):
            raise ValidationError(f"range for {k} must be positive, got {(lo, hi)}")
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(n_draws):
        d = _draw(rng, ranges)
        while d["k_w_ac"] <= d["k_p_ac"]:
            d["k_w_ac"] = float(rng.uniform(*ranges["k_w_ac"]))
        draws.append(d)
    draws.extend(dict(d) for d in extra_draws)

    mats, tags = [], []
    outside = []
    for i, d in enumerate(draws):
        for ctl in CONTROLS:
            if ctl == "energy_balancing" and not d["k_w_ac"] > d["k_p_ac"]:
                outside.append({"draw": i, "control": ctl, "params": d,
                                "reason": "k_w_ac <= k_p_ac"})
                continue
            for con in CONNECTIONS:
                A = closed_loop(ctl, d, con).A
                if A.shape == (1, 1):
                    A = np.array([[A[0, 0], 0.0], [0.0, -1.0]])   # pad for batching
                mats.append(A)
                tags.append((i, ctl, con))
    lam = np.linalg.eigvals(np.array(mats)) if mats else np.zeros((0, 2))
    mr = lam.real.max(axis=1) if mats else np.zeros(0)
    bad = [{"draw": i, "control": c, "connection": k, "max_real": float(m),
            "verdict": _verdict(m), "params": draws[i]}
           for (i, c, k), m in zip(tags, mr) if _verdict(m) != "stable"]
    return {"n_draws": len(draws), "seed": seed, "cases": len(tags),
            "counterexamples": bad, "outside_hypothesis": outside,
            "max_real_worst": float(mr.max()) if mr.size else None,
            "runtime_s": time.perf_counter() - t0}


# ---------------------------------------------------------------------- #
def numeric_jacobian(snapshot, step=1e-6, tol=1e-8, relative_angles=True) -> LinearModel:
    """Central-difference Jacobian of the simulator at a settled snapshot.

    Only states active under the current configuration are kept. With
    ``relative_angles`` the angle reference of each AC subgrid is removed
    and the remaining angles are taken relative to it, which drops the
    rotational zero eigenvalue.
    """
    sysm = snapshot.system
    x = np.array(snapshot.x, dtype=float)
    dx, _ = sysm.rhs(x)
    act = np.flatnonzero(sysm.active_mask())
    r = sysm.synchronous_residual(dx) if relative_angles else dx[act]
    res = float(np.max(np.abs(r))) if r.size else 0.0
    if res >= tol:
        raise NotAtEquilibrium(f"snapshot is not an equilibrium (max |dx/dt| = {res:.3e})")
    n = act.size
    J = np.empty((n, n))
    for c, i in enumerate(act):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        J[:, c] = (sysm.rhs(xp)[0][act] - sysm.rhs(xm)[0][act]) / (2 * step)
    labels = [sysm.labels[i] for i in act]
    if relative_angles:
        pos = {int(i): c for c, i in enumerate(act)}
        T = np.eye(n)
        drop = []
        for g in sysm.angle_groups():
            r = pos[g[0]]
            for i in g[1:]:
                T[pos[i], r] -= 1.0
                labels[pos[i]] = f"{sysm.labels[i]}-{sysm.labels[g[0]]}"
            drop.append(r)
        keep = [c for c in range(n) if c not in drop]
        # with the reference angle column removed, other angles are relative
        J = (T @ J)[np.ix_(keep, keep)]
        labels = [labels[c] for c in keep]
    return LinearModel(J, labels, "numeric_jacobian", snapshot)


def single_ipc_parameters(sysm):
    """``b_ac, k_ac, g_dc, k_dc`` and controller gains of a one-IPC system.

    The network seen by the MMC is Kron-reduced onto the EMFs of the AC
    source and the MMC (and onto the DC source and MMC nodes).
    """
    a = sysm.arrays
    if len(a["i_bus"]) != 1 or len(a["s_bus"]) != 1 or len(a["q_node"]) != 1:
        raise ValidationError("single_ipc_parameters needs one IPC, one AC source and one DC source")
    Y = a["Yr"] + 1j * a["Yi"]
    nb = Y.shape[0]
    Yf = np.zeros((nb + 2, nb + 2), dtype=complex)
    Yf[:nb, :nb] = Y
    for k, (bus, y) in enumerate(((a["s_bus"][0], a["s_yr"][0] + 1j * a["s_yi"][0]),
                                  (a["i_bus"][0], a["i_yr"][0] + 1j * a["i_yi"][0]))):
        e = nb + k
        Yf[bus, bus] += y
        Yf[e, e] += y
        Yf[bus, e] -= y
        Yf[e, bus] -= y
    Yr = _kron(Yf, list(range(nb, nb + 2)))
    G = a["Gd"]
    Gr = _kron(G, [int(a["q_node"][0]), int(a["i_node"][0])])
    par = a["i_par"][0]
    return {"b_ac": float(Yr[0, 1].imag), "k_ac": float(a["s_k"][0]),
            "g_dc": float(-Gr[0, 1]), "k_dc": float(a["q_k"][0]),
            "k_p_ac": float(par[P_KPAC]), "k_w_ac": float(par[P_KWAC]),
            "k_p_dc": float(par[P_KPDC]), "k_w_dc": float(par[P_KWDC])}


def _kron(Y, keep):
    elim = [i for i in range(Y.shape[0]) if i not in keep]
    if not elim:
        return Y[np.ix_(keep, keep)]
    A = Y[np.ix_(keep, keep)]
    B = Y[np.ix_(keep, elim)]
    C = Y[np.ix_(elim, keep)]
    D = Y[np.ix_(elim, elim)]
    return A - B @ np.linalg.solve(D, C)


def reduce_to_closed_form(model: LinearModel, sysm):
    """Project a numeric single-IPC Jacobian onto the closed-form coordinates.

    Uses the angle of the MMC relative to the AC source and the energy
    deviation; for energy balancing the angle is shifted by
    ``omega_b k_p^ac dW`` as in the closed form.
    """
    sysm_ = model.snapshot.system if model.snapshot is not None else sysm
    a = sysm_.arrays
    if len(a["i_bus"]) != 1:
        raise ValidationError("reduction needs a single IPC")
    typ = int(a["i_type"][0])
    o = int(a["i_x"][0])
    idx = {n: k for k, n in enumerate(model.labels)}
    th = idx.get(f"{sysm_.labels[o + 1]}-{sysm_.labels[a['s_x'][0]]}")
    w = idx[sysm_.labels[o]]
    if th is None:
        raise ValidationError("model must use angles relative to the AC source")
    A = model.A[np.ix_([th, w], [th, w])]
    if typ == HYBRID:
        return LinearModel(A, ["delta", "dW"], "numeric_jacobian", model.snapshot)
    if typ != ENERGY_BAL:
        raise ValidationError("reduction defined for hybrid droop and energy balancing only")
    s = a["wb"][0] * a["i_par"][0, P_KPAC]
    T = np.array([[1.0, -s], [0.0, 1.0]])
    P = np.array([[1.0, s], [0.0, 1.0]])
    return LinearModel(T @ A @ P, ["vartheta", "dW"], "numeric_jacobian", model.snapshot)


def compare_models(a: LinearModel, b: LinearModel):
    """Largest entrywise relative error (scaled by the largest entry)."""
    if a.A.shape != b.A.shape:
        raise ValueError(f"shape mismatch {a.A.shape} vs {b.A.shape}")
    scale = max(np.max(np.abs(a.A)), np.max(np.abs(b.A)), 1e-300)
    err = np.abs(a.A - b.A)
    rel = np.where(np.abs(b.A) > 1e-12 * scale, err / np.maximum(np.abs(b.A), 1e-300), err / scale)
    return float(np.max(rel))


# ---------------------------------------------------------------------- #
def steady_state_relations(snapshot, ipc_id):
    """Residuals of the steady-state map of one dual-port IPC.

    ``dW`` is the energy error per unit of the IPC's nominal energy.
    Energy balancing: ``omega - omega* = k_w^ac dW`` and
    ``omega - omega* = (k_w^ac/k_w^dc)(V_dc - V*)``.
    Hybrid droop (needs ``P*_dc = P*_ac``): energy eliminated,
    ``omega - omega* = -(k_p^ac + alpha k_p^dc)(P - P*) + alpha (V_dc - V*)``.
    """
    sysm = snapshot.system
    if ipc_id not in sysm.ipc_slot:
        raise ValidationError(f"unknown IPC {ipc_id!r}")
    c = sysm.sc.ipc(ipc_id).controller
    m = sysm.ipc_slot[ipc_id]
    wt = sysm.arrays["i_par"][m, 4]
    dW = (snapshot.get(f"{ipc_id}.W") - wt) / sysm.w_nom[m]
    dw = snapshot.get(f"{ipc_id}.omega") - c.omega_set
    dv = snapshot.get(f"{ipc_id}.V_dc") - c.v_dc_set
    pac, pdc = snapshot.get(f"{ipc_id}.P_ac"), snapshot.get(f"{ipc_id}.P_dc")
    if c.type == "energy_balancing":
        r = {"omega_vs_energy": dw - c.k_w_ac * dW,
             "omega_vs_vdc": dw - c.k_w_ac / c.k_w_dc * dv,
             "power_balance": pdc - pac}
    elif c.type == "hybrid_droop":
        if abs(c.p_dc_set - c.p_ac_set) > 1e-12:
            raise ValidationError(
                "hybrid-droop energy elimination assumes p_dc_set == p_ac_set "
                f"(got {c.p_dc_set} and {c.p_ac_set})")
        if not c.k_w_dc > 0:
            raise ValidationError("hybrid-droop steady-state map needs k_w_dc > 0")
        alpha = c.k_w_ac / c.k_w_dc
        r = {"energy_eliminated": dw + (c.k_p_ac + alpha * c.k_p_dc) * (pac - c.p_ac_set)
             - alpha * dv,
             "power_balance": pdc - pac}
    else:
        raise ValidationError(f"no dual-port steady-state map for controller {c.type!r}")
    return {"ipc": ipc_id, "controller": c.type, "residuals": r,
            "max_abs": float(max(abs(v) for v in r.values()))}


# ---------------------------------------------------------------------- #
def gain_consistency(edges):
    """Alpha-ratio audit on the AC/DC bipartite graph.

    ``edges`` is a list of ``(name, ac_grid, dc_grid, k_w_ac, k_w_dc,
    omega_set)``. A potential ``phi`` with ``phi_ac - phi_dc = log alpha``
    on every IPC exists exactly when all AC-DC-AC route products agree;
    the first IPC closing an inconsistent loop is reported together with
    the IPC through which its DC grid was first reached.
    """
    if len(edges) < 2:
        raise ValidationError("gain consistency needs at least two IPCs")
    alpha = {}
    adj = {}
    for e in edges:
        name, ac, dc, kwa, kwd, _ = e
        if not (kwa > 0 and kwd > 0):
            raise ValidationError(f"{name}: k_w_ac and k_w_dc must be positive")
        alpha[name] = kwa / kwd
        adj.setdefault(("ac", ac), []).append((("dc", dc), name, math.log(alpha[name])))
        adj.setdefault(("dc", dc), []).append((("ac", ac), name, -math.log(alpha[name])))
    violations = []
    phi, via = {}, {}
    seen_edges = set()
    for start in adj:
        if start in phi:
            continue
        phi[start] = 0.0
        via[start] = None
        q = deque([start])
        while q:
            u = q.popleft()
            for v, name, w in adj[u]:
                if name in seen_edges:
                    continue
                seen_edges.add(name)
                # phi_u - phi_v = w for ac->dc (log alpha), sign flipped for dc->ac
                want = phi[u] - w
                if v not in phi:
                    phi[v] = want
                    via[v] = name
                    q.append(v)
                elif abs(phi[v] - want) > 1e-9:
                    dc = v if v[0] == "dc" else u
                    pair = (via[dc], name) if via[dc] is not None else (name,)
                    violations.append({"kind": "alpha_ratio", "pair": pair,
                                       "log_mismatch": phi[v] - want})
    omega = {}
    for name, ac, dc, _, _, ws in edges:
        omega.setdefault(ac, []).append((name, ws))
    for ac, lst in omega.items():
        vals = {round(w, 12) for _, w in lst}
        if len(vals) > 1:
            violations.append({"kind": "omega_set", "ac_grid": ac,
                               "ipcs": [n for n, _ in lst], "values": sorted(vals)})
    return {"consistent": not violations, "alpha": alpha, "violations": violations}


def check_gain_consistency(sc):
    """Alpha-ratio audit of the energy-balancing IPCs of a scenario."""
    edges = []
    ac_of = {b.id: g.id for g in sc.ac_subgrids for b in g.buses}
    dc_of = {n.id: g.id for g in sc.dc_subgrids for n in g.nodes}
    for p in sc.ipcs:
        c = p.controller
        if c.type != "energy_balancing":
            continue
        edges.append((p.id, ac_of[p.bus], dc_of[p.node], c.k_w_ac, c.k_w_dc, c.omega_set))
    shared = {}
    for e in edges:
        shared.setdefault(e[2], []).append(e[0])
    if not any(len(v) >= 2 for v in shared.values()):
        raise ValidationError("gain consistency needs two energy-balancing IPCs on one DC grid")
    return gain_consistency(edges)


def circulating_power(sc, result_or_snapshot, ac_a=None, ac_b=None):
    """Power circulating around parallel DC routes between two AC grids.

    For each DC grid the transfer from ``ac_a`` to ``ac_b`` is the DC-side
    power absorbed by its IPCs in ``ac_a``; circulation is the part of
    opposing route flows that cancels, ``(sum |p| - |sum p|) / 2``.
    """
    ac_of = {b.id: g.id for g in sc.ac_subgrids for b in g.buses}
    dc_of = {n.id: g.id for g in sc.dc_subgrids for n in g.nodes}
    ac_ids = [g.id for g in sc.ac_subgrids]
    ac_a = ac_a or ac_ids[0]
    get = (result_or_snapshot.get if hasattr(result_or_snapshot, "get")
           else result_or_snapshot.final)
    route = {}
    for p in sc.ipcs:
        if ac_of[p.bus] == ac_a:
            route[dc_of[p.node]] = route.get(dc_of[p.node], 0.0) - get(f"{p.id}.P_dc")
    flows = np.array(list(route.values()))
    return float((np.abs(flows).sum() - abs(flows.sum())) / 2), route


def theorem_cases(sc):
    """Closed-loop verdicts of a single-IPC scenario under the theorem hypotheses.

    Network parameters come from the analytic-fidelity network (zero-flow
    linearisation, no filters). Both dual-port controls are evaluated in
    all three connection cases: the scenario's controller with its own
    gains, the other with the reference set the scenario selects.
    """
    from . import mmc as _mmc
    from .system import System

    sysm = System(sc, fidelity="analytic", backend="python")
    net = single_ipc_parameters(sysm)
    wb = float(sysm.arrays["wb"][0])
    wnom = float(sysm.w_nom[0])
    c = sc.ipcs[0].controller
    table = (_mmc.GAINS_GRID_OF_GRIDS if c.gains == "grid_of_grids"
             else _mmc.GAINS_SINGLE_IPC)
    out = []
    for ctl in CONTROLS:
        g = ({k: getattr(c, k) for k in ("k_p_ac", "k_w_ac", "k_p_dc", "k_w_dc")}
             if c.type == ctl else dict(table[ctl]))
        if ctl == "energy_balancing" and not g["k_w_ac"] > g["k_p_ac"]:
            raise ValidationError("energy balancing outside the theorem hypothesis: "
                                  "needs k_w_ac > k_p_ac")
        params = {"b_ac": net["b_ac"], "g_dc": net["g_dc"], "k_ac": net["k_ac"],
                  "k_dc": net["k_dc"], "k_p_ac": g["k_p_ac"], "k_p_dc": g["k_p_dc"],
                  "k_w_ac": g["k_w_ac"] / wnom, "k_w_dc": g["k_w_dc"] / wnom}
        for conn in CONNECTIONS:
            model = closed_loop(ctl, params, conn, omega_base=wb)
            rep = certify(model)
            out.append({"control": ctl, "connection": conn, "labels": model.labels,
                        "A": model.A.tolist(), **rep.as_dict()})
    return out
