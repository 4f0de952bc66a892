"""Command-line interface.

Exit codes: 0 completed, 2 validation error, 3 unstable, 4 solver failure.
Reports are JSON files in the output directory (``--out``, else the
``GOGSIM_OUT`` environment variable, else ``./gogsim_out``).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import pathlib
import sys

import numpy as np

from . import analysis
from .errors import GogError, NotAtEquilibrium, ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_UNSTABLE, EXIT_SOLVER = 0, 2, 3, 4
OUT_ENV = "GOGSIM_OUT"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def out_dir(arg) -> pathlib.Path:
    p = pathlib.Path(arg or os.environ.get(OUT_ENV) or "gogsim_out")
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_json(path, data):
    path.write_text(json.dumps(_jsonable(data), indent=2) + "\n")


def write_csv(path, time, columns: dict):
    """``time_s`` then one column per signal; repr floats keep full precision."""
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", *names])
        cols = [np.asarray(columns[n], dtype=float) for n in names]
        for k, t in enumerate(time):
            w.writerow([repr(float(t))] + [repr(float(c[k])) for c in cols])


def _load(path):
    from .scenario_io import load_scenario
    return load_scenario(path)


# ---------------------------------------------------------------------- #
def cmd_simulate(args):
    from .sim import simulate
    sc = _load(args.scenario)
    res = simulate(sc, fidelity=args.fidelity, dt=args.dt, t_end=args.t_end)
    out = out_dir(args.out)
    files = []
    for group, names in res.groups().items():
        if not names:
            continue
        p = out / f"{group}.csv"
        write_csv(p, res.time, {n: res.signal(n) for n in names})
        files.append(p.name)
    final = {n: res.final(n) for n in res.obs_names}
    final.update({n: float(v[-1]) for n, v in res.extra.items()})
    final.update({n: float(res.final_x[k]) for k, n in enumerate(res.labels)
                  if not n.split(".")[-1].startswith("spare")})
    code = EXIT_OK if res.completed else EXIT_UNSTABLE
    summary = {"scenario": sc.name, "status": res.status, "reason": res.reason,
               "t_fail": res.t_fail, "exit_code": code, "backend": res.backend,
               "wall_time_s": res.wall_time, "t_end": float(res.time[-1]),
               "events": res.events,
               "max_snap_s": max((e["snap"] for e in res.events), default=0.0),
               "energy_check": res.energy_check, "final": final, "files": files}
    write_json(out / "summary.json", summary)
    tail = f" ({res.reason} at t = {res.t_fail:g} s)" if not res.completed else ""
    print(f"{sc.name}: {res.status}{tail}; wrote {len(files)} CSV files to {out}")
    return code


def cmd_linearize(args):
    sc = _load(args.scenario)
    out = out_dir(args.out)
    if args.mode == "theorem":
        cases = analysis.theorem_cases(sc)
        report = {"scenario": sc.name, "mode": "theorem", "cases": cases}
        bad = [c for c in cases if c["verdict"] != "stable"]
        for c in cases:
            print(f"{c['control']:>17} {c['connection']:>8}: {c['verdict']} "
                  f"(max Re = {c['max_real']:.6g})")
        write_json(out / "linearize.json", report)
        return EXIT_UNSTABLE if bad else EXIT_OK
    from .sim import Snapshot, prepare, settle, derivative_norm
    if args.settle:
        snap = settle(sc, fidelity=args.fidelity, dt=args.dt)
    else:
        sysm, x = prepare(sc, args.fidelity)
        _, obs = sysm.rhs(x)
        snap = Snapshot(0.0, x, obs, derivative_norm(sysm, x), sysm)
    model = analysis.numeric_jacobian(snap)
    rep = analysis.certify(model)
    report = {"scenario": sc.name, "mode": "at_equilibrium", "t": snap.t,
              "labels": model.labels, "A": model.A, **rep.as_dict()}
    write_json(out / "linearize.json", report)
    print(f"{sc.name}: {rep.verdict} (max Re = {rep.max_real:.6g}, {len(model.labels)} states)")
    return EXIT_OK if rep.verdict == "stable" else EXIT_UNSTABLE


def cmd_check_theorem1(args):
    rep = analysis.theorem1_sweep(n_draws=args.n, seed=args.seed)
    out = out_dir(args.out)
    write_json(out / "theorem1.json", rep)
    n_bad = len(rep["counterexamples"])
    print(f"{args.n} draws, seed {args.seed}: {n_bad} counterexamples "
          f"({rep['runtime_s']:.3f} s)")
    return EXIT_UNSTABLE if n_bad else EXIT_OK


def cmd_check_gains(args):
    sc = _load(args.scenario)
    rep = analysis.check_gain_consistency(sc)
    out = out_dir(args.out)
    write_json(out / "gains.json", {"scenario": sc.name, **rep})
    if rep["consistent"]:
        print(f"{sc.name}: gains consistent")
        return EXIT_OK
    for v in rep["violations"]:
        what = (f"alpha ratio mismatch between {' and '.join(v['pair'])}"
                if v["kind"] == "alpha_ratio" else f"omega_set differs on {v['ac_grid']}")
        print(f"{sc.name}: {what}")
    return EXIT_VALIDATION


def _targets(specs):
    out = {}
    for s in specs or ():
        name, sep, val = s.partition("=")
        if not sep:
            raise ValidationError(f"target {s!r} must look like NAME=VALUE")
        try:
            out[name.strip()] = float(val)
        except ValueError:
            raise ValidationError(f"target {s!r}: {val!r} is not a number") from None
    return out


def cmd_dispatch(args):
    from .dispatch import DispatchProblem, apply_setpoints, solve_dispatch
    from .scenario_io import save_scenario
    sc = _load(args.scenario)
    if not args.free:
        raise ValidationError("dispatch needs at least one --free setpoint")
    prob = DispatchProblem(sc, list(args.free), _targets(args.target), args.fidelity)
    res = solve_dispatch(prob)
    out = out_dir(args.out)
    solved = apply_setpoints(sc, res.setpoints)
    save_scenario(solved, out / "dispatched.yaml")
    write_json(out / "dispatch.json", {"scenario": sc.name, "setpoints": res.setpoints,
                                       "residual": res.residual, "transfers": res.transfers,
                                       "notes": res.notes})
    for k, v in res.setpoints.items():
        print(f"{k} = {v:.10g}")
    for n in res.notes:
        print(f"note: {n}")
    return EXIT_OK


# ---------------------------------------------------------------------- #
def build_parser():
    ap = argparse.ArgumentParser(prog="gogsim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scenario=True, sim=True):
        if scenario:
            p.add_argument("scenario", help="scenario file or bundled scenario name")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./gogsim_out)")
        if sim:
            p.add_argument("--fidelity", choices=("analytic", "dynamic"))
            p.add_argument("--dt", type=float)
        return p

    p = common(sub.add_parser("simulate", help="time-domain run"))
    p.add_argument("--t-end", type=float)
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("linearize", help="eigenvalue certification"))
    p.add_argument("--mode", choices=("theorem", "at_equilibrium"), default="theorem")
    p.add_argument("--settle", action="store_true",
                   help="apply the events and integrate to rest before linearising")
    p.set_defaults(func=cmd_linearize)

    p = common(sub.add_parser("check-theorem1", help="randomised closed-loop sweep"),
               scenario=False, sim=False)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_check_theorem1)

    p = common(sub.add_parser("check-gains", help="alpha-ratio consistency audit"), sim=False)
    p.set_defaults(func=cmd_check_gains)

    p = common(sub.add_parser("dispatch", help="solve setpoints for a steady state"))
    p.add_argument("--free", action="append", metavar="ID.FIELD",
                   help="setpoint to solve for (repeatable)")
    p.add_argument("--target", action="append", metavar="NAME=VALUE",
                   help="observable to hold at a value (repeatable)")
    p.set_defaults(func=cmd_dispatch)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "n", 1) is not None and getattr(args, "n", 1) < 1:
        print("error: --n must be positive", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except (ValidationError, NotAtEquilibrium) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except GogError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
