"""Compiled vs pure-Python kernel timings.

Run ``python3 benchmarks/bench_kernels.py``; each row reports the best of
``--repeat`` runs per backend and checks that both backends agree.
"""
import argparse
import time

import numpy as np

from rydbeam import kernels
from rydbeam.quantum import TWO_PI, DopplerSpec, LevelScheme, velocity_grid

MHZ = TWO_PI * 1e6


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def doppler_case(n_points):
    scheme = LevelScheme()
    spec = DopplerSpec()
    v, w = velocity_grid(scheme, spec)
    rng = np.random.default_rng(0)
    rf = rng.uniform(0, 30, n_points) * MHZ
    dc = rng.uniform(-20, 20, n_points) * MHZ

    def run():
        rho, _ = kernels.rho21_doppler(5 * MHZ, 1 * MHZ, rf, 0.0, dc, 0.0, scheme.gammas,
                                       scheme.k_p, scheme.k_c, scheme.u, v, w,
                                       spec.pole_cut * scheme.u)
        return rho

    return run


def chebval_case(n_points, degree=32, panels=16):
    rng = np.random.default_rng(1)
    coef = rng.standard_normal((panels, degree + 1))
    x = rng.uniform(-1, 1, n_points)
    idx = rng.integers(0, panels, n_points)
    return lambda: kernels.chebval_panels(x, idx, coef)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernel not built; only the python backend is available")
    cases = [("rho21_doppler", n, doppler_case(n)) for n in (16, 256, 2048)]
    cases += [("chebval_panels", n, chebval_case(n)) for n in (1_000, 100_000, 1_000_000)]
    previous = kernels.get_backend()
    print(f"{'kernel':<16}{'points':>10}" + "".join(f"{b:>14}" for b in backends)
          + f"{'speedup':>10}{'max rel diff':>14}")
    try:
        for name, n, fn in cases:
            timings, outs = [], []
            for b in backends:
                kernels.set_backend(b)
                t, out = best_of(fn, args.repeat)
                timings.append(t)
                outs.append(out)
            row = f"{name:<16}{n:>10}" + "".join(f"{1e3 * t:>12.2f}ms" for t in timings)
            if len(backends) == 2:
                py, cy = outs[backends.index("python")], outs[backends.index("cython")]
                diff = np.max(np.abs(py - cy)) / np.max(np.abs(py))
                speed = timings[backends.index("python")] / timings[backends.index("cython")]
                row += f"{speed:>9.1f}x{diff:>14.1e}"
            print(row)
    finally:
        kernels.set_backend(previous)


if __name__ == "__main__":
    main()
