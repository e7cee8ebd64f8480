"""Compare the numba and numpy kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 200] [--full]

Reports the median wall time per call of the hyperplane, projection and
prox kernels for a few ``(n, d)`` shapes, checks that both backends agree,
and, with ``--full``, times a complete solve under each backend (each in a
fresh interpreter, since the backend is fixed at import).
"""
from __future__ import annotations

import argparse
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from projsplit import kernels

SHAPES = [(2, 10), (3, 50), (5, 1000), (5, 10000)]


def _time(fn, args, repeat):
    fn(*args)  # warm-up (triggers compilation)
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        ts.append(time.perf_counter() - t)
    return statistics.median(ts)


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    print(f"{'kernel':14s} {'n':>3s} {'d':>6s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")
    for n, d in SHAPES:
        z = rng.standard_normal(d)
        w = rng.standard_normal((n - 1, d))
        x = rng.standard_normal((n, d))
        y = rng.standard_normal((n, d))
        u, v, _, _ = kernels.hyperplane_numpy(z, w, x, y, 1.0)
        lo, hi = -np.ones(d), np.ones(d)
        cases = [
            ("hyperplane", kernels.hyperplane_numpy, kernels.hyperplane_numba, (z, w, x, y, 1.0)),
            ("project", kernels.project_numpy, kernels.project_numba, (z, w, u, v, 0.3, 1.0)),
            ("soft_threshold", kernels.soft_threshold_numpy, kernels.soft_threshold_numba, (z, 0.5)),
            ("clip", kernels.clip_numpy, kernels.clip_numba, (z, lo, hi)),
        ]
        for name, f_np, f_nb, args in cases:
            a, b = f_np(*args), f_nb(*args)
            for pa, pb in zip(np.atleast_1d(a) if not isinstance(a, tuple) else a,
                              np.atleast_1d(b) if not isinstance(b, tuple) else b):
                if not np.allclose(pa, pb, rtol=1e-12, atol=1e-12):
                    raise SystemExit(f"backend mismatch in {name} at n={n}, d={d}")
            t_np = _time(f_np, args, repeat)
            t_nb = _time(f_nb, args, repeat) if kernels.HAVE_NUMBA else float("nan")
            print(f"{name:14s} {n:3d} {d:6d} {t_np * 1e6:10.2f} {t_nb * 1e6:10.2f} {t_np / t_nb:8.2f}")


_SOLVE = """
import time
from projsplit import kernels, problems, solver
inst = problems.make_random_inclusion(200, 5, seed=1,
    kinds=["l1", "box", "affine_forward", "l1", "affine_forward"])
cfg = solver.SolverConfig(max_iters=2000, pi_tolerance=0.0)
solver.solve(inst, solver.SolverConfig(max_iters=5))
t = time.perf_counter()
solver.solve(inst, cfg)
print(kernels.BACKEND, time.perf_counter() - t)
"""


def bench_solve():
    for flag in ("0", "1"):
        env = dict(os.environ, PROJSPLIT_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", _SOLVE], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        print(f"full solve (n=5, d=200, 2000 iters) backend={out[0]:6s} {float(out[1]):.3f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--full", action="store_true", help="also time complete solves")
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        print("numba not installed; numba columns show the numpy fallback")
    bench_kernels(args.repeat)
    if args.full:
        bench_solve()


if __name__ == "__main__":
    main()
