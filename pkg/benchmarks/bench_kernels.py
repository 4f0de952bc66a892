"""Wall-clock comparison of the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [scenario] [--t-end 0.2] [--repeat 3]

Both backends integrate the same scenario; the script reports the best of
``--repeat`` runs, the speed-up and the largest state difference.
"""
import argparse
import time

import numpy as np

from gogsim.kernels import BACKENDS
from gogsim.scenario_io import load_scenario
from gogsim.sim import simulate


def best_of(sc, backend, t_end, repeat):
    best, res = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = simulate(sc, backend=backend, t_end=t_end)
        best = min(best, time.perf_counter() - t0)
    return best, res


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario", nargs="?", default="single_ipc_energy_balancing")
    ap.add_argument("--t-end", type=float, default=0.2)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    sc = load_scenario(args.scenario)
    steps = int(round(args.t_end / sc.options.dt))
    rows = {}
    for name in sorted(BACKENDS):
        rows[name] = best_of(sc, name, args.t_end, args.repeat)
        t = rows[name][0]
        print(f"{name:>9}: {t * 1e3:9.1f} ms  ({t / steps * 1e6:7.2f} us/step, {steps} steps)")
    if "compiled" not in rows:
        print("compiled kernel not built; only the fallback was timed")
        return
    (tp, rp), (tc, rc) = rows["python"], rows["compiled"]
    print(f"  speed-up: {tp / tc:.0f}x")
    print(f"  max |state difference|: {np.max(np.abs(rp.states - rc.states)):.1e}")


if __name__ == "__main__":
    main()
