"""Time the compiled and numpy subcycling kernels on one benchmark step.

Usage::

    python benchmarks/bench_kernels.py [--h-km 8] [--n-sub 100] [--repeat 3]

Prints seconds per solve and per substep for each staggering, solver and
available backend, plus the speed-up of the compiled kernel.
"""
import argparse
import time

import numpy as np

from seaice_lkf import kernels
from seaice_lkf.benchmark import BenchmarkConfig, make_forcing
from seaice_lkf.discretization import discretization
from seaice_lkf.forcing import initial_thickness
from seaice_lkf.momentum import EVP, MEVP, SolverConfig, State, evp_solve, mevp_solve


def problem(s, h):
    cfg = BenchmarkConfig(staggering=s, h=h)
    g = cfg.build_grid()
    d = discretization(g, s)
    x, y = np.asarray(g.cell_centers).T
    st = State(d.zeros(), initial_thickness(x, y), np.ones(g.n_cells))
    return d, st, make_forcing(cfg, d, 0.0), cfg.dt


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--h-km", type=float, default=8.0)
    p.add_argument("--n-sub", type=int, default=100)
    p.add_argument("--repeat", type=int, default=3)
    a = p.parse_args(argv)
    backends = sorted(kernels.BACKENDS)
    print(f"h = {a.h_km:g} km, n_sub = {a.n_sub}, backends: {', '.join(backends)}")
    print(f"{'grid':<5}{'solver':<7}{'backend':<10}{'s/solve':>10}{'us/substep':>12}{'speed-up':>10}")
    for s in ("B", "CD1", "CD2"):
        d, st, F, dt = problem(s, a.h_km * 1e3)
        for scheme, solve in ((MEVP, mevp_solve), (EVP, evp_solve)):
            t = {}
            for b in backends:
                cfg = SolverConfig(scheme=scheme, n_sub=a.n_sub, backend=b)
                t[b] = best_time(lambda: solve(d, st, F, dt, cfg), a.repeat)
            for b in backends:
                up = t["python"] / t[b]
                print(f"{s:<5}{scheme:<7}{b:<10}{t[b]:>10.4f}{1e6 * t[b] / a.n_sub:>12.1f}{up:>10.1f}")


if __name__ == "__main__":
    main()
