"""Steady-state solves: equilibrium initialisation and setpoint dispatch.

Both are Newton iterations on the simulator's own right-hand side, with
one forming-device angle pinned per AC subgrid. Dispatch additionally
treats user-chosen setpoints as unknowns, holds every IPC at its nominal
energy and (optionally) imposes transfer targets on observables.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._layout import AC_GFM, DC_GFM, HYBRID
from .errors import ConvergenceError, InfeasibleDispatch, NetworkError, ValidationError
from .system import System

FD_STEP = 1e-7
# singular values below this fraction of the largest count as a free direction
RANK_RTOL = 1e-10


class UnderDetermined(ValidationError):
    """The chosen free setpoints leave a direction of the solution open."""
V_DC_BOUNDS = (0.5, 1.5)
V_AC_BOUNDS = (0.7, 1.3)


def _residual(sysm, x, free, targets, pin_energy, synchronous=False):
    dx, obs = sysm.rhs(x)
    # synchronous: common frequency per AC subgrid, angles rotate together
    r = [sysm.synchronous_residual(dx) if synchronous else dx[sysm.active_mask()]]
    if pin_energy:
        a = sysm.arrays
        for m in range(len(a["i_x"])):
            if a["i_type"][m] == HYBRID:
                r.append([x[a["i_x"][m]] - a["i_par"][m, 4]])
    for name, val in targets.items():
        r.append([obs[sysm.obs_index[name]] - val])
    return np.concatenate(r), obs


def equilibrium(sysm: System, x0, free=(), targets=None, pin_energy=False,
                tol=1e-10, max_iter=40, require_rank=False, synchronous=False):
    """Newton/Gauss-Newton on ``f(x, p) = 0``.

    With ``pin_energy`` the hybrid-droop IPCs are held at their energy
    setpoint and the energy integrators of the single-port controls are
    fixed at zero, so their power setpoints are met exactly. (Energy-
    balancing IPCs reach nominal energy through the frequency equation.)

    ``free`` lists parameter specs (``"<id>.<field>"``) solved for,
    ``targets`` maps observable names to required values. Returns
    ``(x, params, residual_norm, iterations)``. With ``synchronous`` the
    frequency of each AC subgrid is left free (the angle states rotate
    together at a common off-nominal speed). Raises
    :class:`ConvergenceError` when no solution is reached.
    """
    targets = dict(targets or {})
    x = np.array(x0, dtype=float)
    act = sysm.active_mask()
    unk = [i for i in np.flatnonzero(act) if i not in set(sysm.angle_pins())]
    if pin_energy:
        a = sysm.arrays
        for m in range(len(a["i_x"])):
            if a["i_type"][m] == AC_GFM:
                unk.remove(a["i_x"][m] + 4)
            elif a["i_type"][m] == DC_GFM:
                unk.remove(a["i_x"][m] + 3)
    p = np.array([sysm.get_param(s) for s in free], dtype=float)
    nu = len(unk) + len(free)

    def put(y):
        x[unk] = y[:len(unk)]
        for s, v in zip(free, y[len(unk):]):
            sysm.set_param(s, v)

    y = np.concatenate([x[unk], p])
    norm = np.inf
    for it in range(max_iter + 1):
        put(y)
        try:
            r, _ = _residual(sysm, x, free, targets, pin_energy, synchronous)
        except NetworkError as exc:
            raise ConvergenceError(f"network solve failed during equilibrium search: {exc}")
        norm = float(np.max(np.abs(r))) if r.size else 0.0
        if norm < tol:
            sysm.resync_dc(x)
            return x.copy(), dict(zip(free, y[len(unk):])), norm, it
        if it == max_iter:
            break
        J = np.empty((r.size, nu))
        for k in range(nu):
            h = FD_STEP * max(1.0, abs(y[k]))
            yk = y.copy()
            yk[k] += h
            put(yk)
            try:
                rk, _ = _residual(sysm, x, free, targets, pin_energy, synchronous)
            except NetworkError as exc:
                raise ConvergenceError(f"network solve failed in Jacobian: {exc}")
            J[:, k] = (rk - r) / h
        put(y)
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        sv = np.linalg.svd(J, compute_uv=False)
        rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv.size else 0
        if rank < nu and require_rank:
            raise UnderDetermined(
                f"free setpoints do not fix the operating point (Jacobian rank {rank} of "
                f"{nu}); add a target or pin one of {list(free)}")
        y = y + step
        if not np.all(np.isfinite(y)):
            break
    raise ConvergenceError(f"steady-state solve did not converge (residual {norm:.3e})")


def initial_state(sysm: System, tol=1e-9):
    """Steady state for the scenario's own setpoints.

    Setpoints from a dispatch solve give an equilibrium at nominal
    frequency. Otherwise the droops settle at an off-nominal common
    frequency per AC subgrid, which is used instead.
    """
    x0 = sysm.x0.copy()
    try:
        x, _, norm, _ = equilibrium(sysm, x0, tol=tol)
        return x
    except ConvergenceError:
        pass
    try:
        x, _, norm, _ = equilibrium(sysm, x0, tol=tol, synchronous=True)
    except ConvergenceError as exc:
        raise ConvergenceError(
            f"no steady state for the scenario setpoints ({exc}); run the dispatch "
            "command or set options.init: flat") from None
    return x


@dataclass
class DispatchProblem:
    """Which setpoints are free and which observables are prescribed."""

    scenario: object
    free: list
    targets: dict = field(default_factory=dict)
    fidelity: str | None = None


@dataclass
class DispatchResult:
    setpoints: dict
    x: np.ndarray
    residual: float
    transfers: dict
    system: System
    notes: list


def dof_count(sysm: System, problem: DispatchProblem):
    """Structural count ``(equations, unknowns)`` of a dispatch solve.

    Equations exceed unknowns by one per AC angle reference (its frequency
    equation stays) and by one per target and hybrid-droop energy pin;
    single-port energy integrators drop out as unknowns.
    """
    a = sysm.arrays
    act = sysm.active_mask()
    n_pi = int(np.sum((a["i_type"] == AC_GFM) | (a["i_type"] == DC_GFM)))
    n_hd = int(np.sum(a["i_type"] == HYBRID))
    neq = int(act.sum()) + n_hd + len(problem.targets)
    nun = int(act.sum()) - len(sysm.angle_pins()) - n_pi + len(problem.free)
    return neq, nun


def solve_dispatch(problem: DispatchProblem, tol=1e-10) -> DispatchResult:
    """Setpoints making the scenario an equilibrium at nominal energy."""
    sc = problem.scenario
    sysm = System(sc, fidelity=problem.fidelity, backend=None)
    for s in problem.free:
        try:
            sysm.get_param(s)
        except (KeyError, ValueError):
            raise ValidationError(f"unknown free setpoint {s!r}")
    for t in problem.targets:
        if t not in sysm.obs_index:
            raise ValidationError(f"unknown target observable {t!r}")
    neq, nun = dof_count(sysm, problem)
    if nun > neq:
        raise ValidationError(
            f"dispatch has {nun} unknowns but only {neq} equations; drop free setpoints "
            "or add targets")
    try:
        x, sp, norm, _ = equilibrium(sysm, sysm.x0.copy(), free=problem.free,
                                     targets=problem.targets, pin_energy=True, tol=tol,
                                     require_rank=True)
    except ConvergenceError as exc:
        raise InfeasibleDispatch(f"no steady state for the requested dispatch: {exc}")
    dx, obs = sysm.rhs(x)
    vdc = sysm.kernel.Vdc
    vac = np.abs(sysm.kernel.Vac)
    if vdc.size and (vdc.min() < V_DC_BOUNDS[0] or vdc.max() > V_DC_BOUNDS[1]):
        raise InfeasibleDispatch(f"DC voltages outside {V_DC_BOUNDS} at the solution")
    if vac.size and (vac.min() < V_AC_BOUNDS[0] or vac.max() > V_AC_BOUNDS[1]):
        raise InfeasibleDispatch(f"AC voltages outside {V_AC_BOUNDS} at the solution")
    transfers = {}
    for p in sc.ipcs:
        transfers[p.id] = {"P_ac": float(obs[sysm.obs_index[f"{p.id}.P_ac"]]),
                           "P_dc": float(obs[sysm.obs_index[f"{p.id}.P_dc"]])}
    notes = ["steady-state transfer under energy-balancing control depends on the DC cable "
             "resistances; inaccurate cable data shifts the realised flows"]
    return DispatchResult({k: float(v) for k, v in sp.items()}, x, norm, transfers, sysm, notes)


def apply_setpoints(sc, setpoints: dict):
    """Copy of a scenario with solved setpoints written into its fields."""
    data = sc.model_dump(by_alias=True)
    for spec, val in setpoints.items():
        tgt, fld = spec.split(".", 1)
        for d in data["devices"]:
            if d["id"] == tgt:
                d[fld] = val
        for p in data["ipcs"]:
            if p["id"] == tgt:
                if fld == "p_mmc_set":
                    p["controller"]["p_ac_set"] = p["controller"]["p_dc_set"] = val
                else:
                    p["controller"][fld] = val
    return type(sc).model_validate(data)
