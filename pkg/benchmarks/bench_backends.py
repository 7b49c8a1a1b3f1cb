"""Benchmark the numba kernels against the pure-NumPy fallback.

Run from the repository root:

    python3 benchmarks/bench_backends.py [--quick]

Times each hot kernel on representative Monte Carlo workloads plus one
end-to-end cell per backend (the end-to-end comparison re-executes this
script in a subprocess with CVBIAS_NO_NUMBA=1, since the backend is
chosen at import time).
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from cvbias import _kernels_numba as knb
from cvbias import _kernels_numpy as knp


def timeit(fn, *args, repeat=200):
    fn(*args)  # warm-up / JIT
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    cases = []

    eps = rng.standard_normal(1400)
    cases.append(("ar1_path (n=1400)", (eps, 0.9), "ar1_path"))

    z = rng.standard_normal(1400)
    cases.append(("arch1_errors (n=1400)", (z, 0.5, 0.5, 1.0), "arch1_errors"))

    eps2 = rng.standard_normal((1400, 2))
    coeffs = np.array([[[0.5, 0.1], [0.0, 0.3]]])
    cases.append(("var_path (n=1400, k=2)", (eps2, coeffs), "var_path"))

    x = rng.standard_normal((400, 3))
    y = x @ np.array([1.0, -0.5, 0.25]) + rng.standard_normal(400)
    gram = x.T @ x
    xty = x.T @ y
    ainv = np.linalg.inv(gram)
    beta = np.linalg.solve(gram, xty)
    cases.append(("loo_arrays (T=400, p=3)", (x, y, ainv, beta), "loo_arrays"))
    cases.append(("hblock_arrays (T=400, p=3, h=4)", (x, y, gram, xty, 4), "hblock_arrays"))
    cases.append(("expanding_arrays (T=400, p=3)", (x, y, 20, 1), "expanding_arrays"))

    print(f"{'kernel':34s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for label, args, name in cases:
        t_nb = timeit(getattr(knb, name), *args, repeat=repeat)
        t_np = timeit(getattr(knp, name), *args, repeat=repeat)
        print(f"{label:34s} {t_nb * 1e6:8.1f}us {t_np * 1e6:8.1f}us {t_np / t_nb:7.1f}x")


def bench_end_to_end(reps):
    from cvbias import (
        CvScheme,
        DgpSpec,
        ErrorSpec,
        McConfig,
        MeanSpec,
        ModelSpec,
        backend_name,
        run_mc,
    )

    cfg = McConfig(
        dgp=DgpSpec(mean_kind=MeanSpec.ar1(0.9), errors=ErrorSpec.gaussian(1.0)),
        models=(ModelSpec(id="ar1c", columns=(0,), intercept=True),),
        schemes=(CvScheme.loo(),),
        T_grid=(50,),
        reps=reps,
        seed=1234,
    )
    run_mc(cfg, threads=1)  # warm-up
    t0 = time.perf_counter()
    report = run_mc(cfg, threads=1)
    dt = time.perf_counter() - t0
    cell = report.cell("ar1c", "loo", 50)
    print(
        f"end-to-end bias cell ({backend_name():5s} backend, T=50, R={reps}): "
        f"{dt:6.2f}s  pooled bias {cell.bias_pooled.value:+.5f}"
    )
    return dt


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="fewer repetitions")
    parser.add_argument("--end-to-end-only", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    reps_kernel = 50 if args.quick else 200
    reps_mc = 2000 if args.quick else 10000

    if args.end_to_end_only:
        bench_end_to_end(reps_mc)
        return

    bench_kernels(reps_kernel)
    print()
    bench_end_to_end(reps_mc)
    sys.stdout.flush()
    env = dict(os.environ, CVBIAS_NO_NUMBA="1")
    cmd = [sys.executable, __file__, "--end-to-end-only"]
    if args.quick:
        cmd.append("--quick")
    subprocess.run(cmd, env=env, check=True)


if __name__ == "__main__":
    main()
