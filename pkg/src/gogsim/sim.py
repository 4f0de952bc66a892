"""Time-domain simulation with an event schedule.

Fixed-step RK4 over the differential states, the algebraic networks
re-solved at every stage inside the kernel. Events are applied at step
boundaries; requested times are snapped to the step grid and the snap
distance is logged.
"""
from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from ._layout import DC_GFM, OK, REASONS
from .dispatch import initial_state
from .errors import NotAtEquilibrium, SettleTimeout, ValidationError
from .system import System


@dataclass
class SimResult:
    status: str                 # "completed" | "unstable"
    reason: str | None
    t_fail: float | None
    code: int
    time: np.ndarray
    states: np.ndarray
    obs: np.ndarray
    labels: list
    obs_names: list
    extra: dict                  # derived series, e.g. per-subgrid frequency
    events: list
    final_x: np.ndarray
    energy_check: dict
    backend: str
    wall_time: float
    system: System = field(repr=False, default=None)

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def signal(self, name: str) -> np.ndarray:
        if name in self.extra:
            return self.extra[name]
        if name in self._oidx:
            return self.obs[:, self._oidx[name]]
        if name in self._sidx:
            return self.states[:, self._sidx[name]]
        raise KeyError(name)

    def final(self, name: str) -> float:
        return float(self.signal(name)[-1])

    def __post_init__(self):
        self._oidx = {n: k for k, n in enumerate(self.obs_names)}
        self._sidx = {n: k for k, n in enumerate(self.labels)}

    def groups(self) -> dict:
        """Signal groups written as one CSV each."""
        g = {"frequency": [], "dc_voltage": [], "ipc": [], "energy": [], "devices": [],
             "ac_buses": []}
        for n in self.extra:
            g["frequency"].append(n)
        for n in self.obs_names:
            head, _, tail = n.rpartition(".")
            if n.startswith("bus."):
                g["ac_buses"].append(n)
            elif n.startswith("node."):
                g["dc_voltage"].append(n)
            elif head in self.system.ipc_slot:
                (g["frequency"] if tail == "omega" else g["ipc"]).append(n)
            else:
                (g["frequency"] if tail == "omega" else g["devices"]).append(n)
        g["energy"] = [f"{p}.W" for p in self.system.ipc_slot]
        return g


def _event_steps(events, dt):
    out = []
    for k, ev in enumerate(events):
        n = int(round(ev.t / dt))
        out.append((n, k, ev, abs(n * dt - ev.t)))
    return out


def _forming_omega_columns(sysm, obs_rows):
    """Per AC subgrid mean frequency of the connected forming devices."""
    a = sysm.arrays
    out = {}
    for k, g in enumerate(sysm.sc.ac_subgrids):
        s0, n = a["acg_start"][k], a["acg_len"][k]
        cols = [a["s_obs"][j] + 2 for j in range(len(a["s_bus"]))
                if a["s_conn"][j] and s0 <= a["s_bus"][j] < s0 + n]
        cols += [a["i_obs"][m] + 3 for m in range(len(a["i_bus"]))
                 if a["i_acc"][m] and a["i_type"][m] != DC_GFM and s0 <= a["i_bus"][m] < s0 + n]
        if not cols:   # grid-following only: report what the PLLs see
            cols = [a["g_obs"][j] + 1 for j in range(len(a["g_bus"]))
                    if a["g_conn"][j] and s0 <= a["g_bus"][j] < s0 + n]
        out[f"{g.id}.omega"] = (obs_rows[:, cols].mean(axis=1) if cols
                                else np.full(len(obs_rows), np.nan))
    return out


def prepare(sc, fidelity=None, backend=None, dt=None):
    """System plus its initial state, per ``options.init``."""
    sysm = System(sc, fidelity=fidelity, backend=backend)
    if dt is not None:
        sysm._check_stiffness(dt)
    if sc.options.init == "equilibrium":
        x = initial_state(sysm)
    else:
        x = sysm.x0.copy()
        sysm.rhs(x)
        sysm.resync_dc(x)
    return sysm, x


def simulate(sc, *, fidelity=None, dt=None, t_end=None, backend=None,
             record_every=None, until_event=None) -> SimResult:
    """Run a scenario; events at or after ``until_event`` (index) are ignored."""
    wall = _time.perf_counter()
    dt = dt or sc.options.dt
    t_end = t_end or sc.options.t_end
    rec = record_every or sc.options.record_every
    sysm, x = prepare(sc, fidelity, backend, dt)
    events = sc.events if until_event is None else sc.events[:until_event]
    res = _integrate(sysm, x, events, dt, t_end, rec)
    res.wall_time = _time.perf_counter() - wall
    return res


def _integrate(sysm, x, events, dt, t_end, rec, t0=0.0):
    k = sysm.kernel
    nsteps = int(round((t_end - t0) / dt))
    evs = [e for e in _event_steps(events, dt) if e[0] * dt >= t0 - 1e-12]
    nrows = nsteps // rec + 2 + len(evs) + 1
    rt = np.zeros(nrows)
    rx = np.zeros((nrows, sysm.nx))
    ro = np.zeros((nrows, len(sysm.obs_names)))
    extra = {f"{g.id}.omega": np.zeros(nrows) for g in sysm.sc.ac_subgrids}
    k.equad[:] = 0.0
    w0 = np.array([x[o] for o in sysm.arrays["i_x"]])
    log = []
    step0 = int(round(t0 / dt))
    step = step0
    pos = 0
    status, t_fail = OK, None

    status = k.rhs(t0, x, np.zeros(sysm.nx))
    rt[pos], rx[pos], ro[pos] = t0, x, k.obs
    pos += 1
    seg_start = 0
    ei = 0
    while status == OK:
        # apply every event due at this step
        applied = False
        while ei < len(evs) and evs[ei][0] <= step:
            n, idx, ev, snap = evs[ei]
            sysm.apply_event(ev, x)
            log.append({"index": idx, "t_requested": ev.t, "t_applied": step * dt,
                        "snap": snap, "action": ev.action, "target": ev.target})
            ei += 1
            applied = True
        if applied:
            for name, col in _forming_omega_columns(sysm, ro[seg_start:pos]).items():
                extra[name][seg_start:pos] = col
            seg_start = pos
            status = k.rhs(step * dt, x, np.zeros(sysm.nx))
            if status != OK:
                break
        if step >= step0 + nsteps:
            break
        nxt = evs[ei][0] if ei < len(evs) else step0 + nsteps
        nxt = min(nxt, step0 + nsteps)
        todo = nxt - step
        if todo <= 0:
            continue
        status, done, pos = k.run(x, step, dt, todo, rec, rt, rx, ro, pos)
        step += done
    for name, col in _forming_omega_columns(sysm, ro[seg_start:pos]).items():
        extra[name][seg_start:pos] = col
    if status != OK:
        t_fail = step * dt
    rt, rx, ro = rt[:pos], rx[:pos], ro[:pos]
    extra = {n: v[:pos] for n, v in extra.items()}
    w1 = np.array([x[o] for o in sysm.arrays["i_x"]])
    echeck = {}
    for p, m in sysm.ipc_slot.items():
        echeck[p] = {"delta_W": float(w1[m] - w0[m]), "quadrature": float(k.equad[m]),
                     "error": float(abs(w1[m] - w0[m] - k.equad[m]))}
    return SimResult(
        status="completed" if status == OK else "unstable",
        reason=None if status == OK else REASONS.get(status, str(status)),
        t_fail=t_fail, code=int(status), time=rt, states=rx, obs=ro,
        labels=list(sysm.labels), obs_names=list(sysm.obs_names), extra=extra,
        events=log, final_x=x.copy(), energy_check=echeck, backend=sysm.backend,
        wall_time=0.0, system=sysm)


@dataclass
class Snapshot:
    t: float
    x: np.ndarray
    obs: np.ndarray
    dx_norm: float
    system: System = field(repr=False)

    def get(self, name: str) -> float:
        s = self.system
        if name in s.obs_index:
            return float(self.obs[s.obs_index[name]])
        return float(self.x[s.state_index[name]])


def derivative_norm(sysm, x):
    """Largest derivative in the synchronous frame (an off-nominal but
    common frequency per AC subgrid counts as settled)."""
    dx, _ = sysm.rhs(x)
    r = sysm.synchronous_residual(dx)
    return float(np.max(np.abs(r))) if r.size else 0.0


def settle(sc, at_time=None, *, tol=1e-8, horizon=60.0, chunk=0.25, fidelity=None,
           backend=None, dt=None) -> Snapshot:
    """Integrate until every state derivative is below ``tol`` (1/s).

    Events up to ``at_time`` (default: all) are applied first; afterwards
    the configuration is frozen and integration continues for at most
    ``horizon`` seconds.
    """
    dt = dt or sc.options.dt
    sysm, x = prepare(sc, fidelity, backend, dt)
    t_stop = at_time if at_time is not None else (sc.events[-1].t if sc.events else 0.0)
    evs = [e for e in sc.events if e.t <= t_stop + 1e-12]
    t = 0.0
    if evs or t_stop > 0:
        t_run = max(t_stop, evs[-1].t if evs else 0.0) + dt
        r = _integrate(sysm, x, evs, dt, t_run, 10 ** 9)
        if not r.completed:
            raise SettleTimeout(f"run became unstable before settling: {r.reason}")
        t = t_run
    k = sysm.kernel
    nchunk = max(1, int(round(chunk / dt)))
    rt, rx, ro = np.zeros(1), np.zeros((1, sysm.nx)), np.zeros((1, len(sysm.obs_names)))
    elapsed = 0.0
    while True:
        n = derivative_norm(sysm, x)
        if n < tol:
            _, obs = sysm.rhs(x)
            return Snapshot(t, x.copy(), obs, n, sysm)
        if elapsed >= horizon:
            raise SettleTimeout(f"not settled after {horizon:g} s (max |dx/dt| = {n:.3e})")
        st, done, _ = k.run(x, int(round(t / dt)), dt, nchunk, 0, rt, rx, ro, 0)
        if st != OK:
            raise SettleTimeout(f"run became unstable while settling: {REASONS.get(st, st)}")
        t += done * dt
        elapsed += done * dt


def check_equilibrium(sysm, x, tol=1e-8):
    n = derivative_norm(sysm, x)
    if n >= tol:
        raise NotAtEquilibrium(f"state is not an equilibrium (max |dx/dt| = {n:.3e})")
    return n
