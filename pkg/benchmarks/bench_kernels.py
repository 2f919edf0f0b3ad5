"""Time the compiled and numpy kernels side by side.

Usage::

    python benchmarks/bench_kernels.py [--ells 10 40 80] [--repeat 5]

Prints one line per (kernel, ell, backend) with the best wall time over
``--repeat`` runs and the speed-up of the compiled backend, plus a
whole-census timing with each backend forced in turn.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from sphcrit.kernels import available_backends


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(ells, repeat, n_points):
    backends = available_backends()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'ell':>5}{'backend':>9}{'seconds':>12}{'speedup':>9}")
    for ell in ells:
        re = rng.standard_normal(ell + 1)
        im = rng.standard_normal(ell + 1)
        im[0] = 0.0
        theta = rng.uniform(0.2, np.pi - 0.2, n_points)
        phi = rng.uniform(0.0, 2.0 * np.pi, n_points)
        tol = 1e-10 * np.sqrt(ell * (ell + 1.0))
        cases = {
            "alf_table": lambda k: k.alf_table(ell, theta),
            "field_jets": lambda k: k.field_jets(ell, re, im, theta, phi),
            "newton_polish": lambda k: k.newton_polish(ell, re, im, theta, phi, tol, 30, 20,
                                                       0.5, 0.5, 0.1, np.pi - 0.1),
        }
        for name, call in cases.items():
            times = {b: best_of(lambda: call(mod), repeat) for b, mod in backends.items()}
            for b, t in times.items():
                speed = times["python"] / t if b != "python" else 1.0
                print(f"{name:<14}{ell:>5}{b:>9}{t:>12.5f}{speed:>9.1f}")


CENSUS_SNIPPET = (
    "import time; from sphcrit.field import sample_coefficients; "
    "from sphcrit.critical import find_critical_points; from sphcrit import kernels; "
    "c = sample_coefficients({ell}, 1); t = time.perf_counter(); "
    "find_critical_points(c); print(kernels.BACKEND, time.perf_counter() - t)"
)


def bench_census(ells):
    print("\nfull census, one realization")
    for ell in ells:
        for pure in ("0", "1"):
            env = dict(os.environ, SPHCRIT_PURE_PYTHON=pure)
            out = subprocess.run([sys.executable, "-c", CENSUS_SNIPPET.format(ell=ell)],
                                 env=env, capture_output=True, text=True, check=True).stdout.split()
            print(f"ell={ell:<4} backend={out[0]:<7} seconds={float(out[1]):.3f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ells", type=int, nargs="+", default=[10, 40, 80])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--no-census", action="store_true")
    args = ap.parse_args()
    bench_kernels(args.ells, args.repeat, args.points)
    if not args.no_census:
        bench_census(args.ells)


if __name__ == "__main__":
    main()
