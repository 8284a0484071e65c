"""Benchmark the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--reps N]

Both backends are called directly (the MAXDISC_NUMBA flag only picks the
default), on identical random streams, and their outputs are compared.
"""

import argparse
import math
import time

import numpy as np

from maxdisc import kernels
from maxdisc.extremes import MaximaEngine
from maxdisc.model import ComponentParams, DenseDefault, PickandsGrid, build_model, classify_grid
from maxdisc.sampler import FBMSampler, MeshSpec, stream


def timed(fn, reps):
    fn(0)  # compile / warm caches
    t0 = time.perf_counter()
    out = [fn(r) for r in range(reps)]
    return (time.perf_counter() - t0) / reps, out


def bench_ou(rule, label, reps):
    T = math.exp(8.0)
    eng = MaximaEngine(build_model([ComponentParams(1.0)]), T, classify_grid(rule, 1.0))
    args = eng._ou_args[0]
    rows = []
    results = {}
    for name, impl in kernels.BACKENDS.items():
        fn = impl["ou_joint_maxima"]
        dt, out = timed(lambda r: fn(stream(11, r, 0), *args), reps)
        rows.append((f"ou_joint_maxima [{label}]", name, dt))
        results[name] = np.array([o[:2] for o in out])
    diff = float(np.max(np.abs(results["numba"] - results["numpy"])))
    return rows, diff


def bench_windows(reps):
    mesh = 0.01
    lambdas = np.array([1600, 3200, 6400], dtype=np.int64)
    fbm = FBMSampler(0.5, MeshSpec(mesh, 6401))
    draws = []
    for r in range(reps + 1):
        gen = stream(3, r)
        B = fbm.sample(gen)
        U = 1.0 - gen.random(6400)
        taus = np.array([gen.integers(0, k + 1) for k in lambdas], dtype=np.int64)
        draws.append((B, U, taus))
    rows = []
    results = {}
    for name, impl in kernels.BACKENDS.items():
        fn = impl["window_stats"]
        dt, out = timed(lambda r: fn(draws[r][0], draws[r][1], lambdas, draws[r][2], 100, 1.0, mesh, 1), reps)
        rows.append(("window_stats [alpha=1, bridge]", name, dt))
        results[name] = np.array([np.concatenate(o) for o in out])
    diff = float(np.max(np.abs(results["numba"] - results["numpy"])))
    return rows, diff


def bench_lattice(reps):
    gen = np.random.default_rng(5)
    X = gen.gumbel(size=(4000, 2))
    Y = X - gen.exponential(size=(4000, 2))
    xs = np.repeat(np.linspace(-1, 2, 16)[:, None], 2, axis=1)
    rows = []
    results = {}
    for name, impl in kernels.BACKENDS.items():
        fn = impl["lattice_counts"]
        dt, out = timed(lambda r: fn(X, Y, xs, xs), reps)
        rows.append(("lattice_counts [4000 x 16]", name, dt))
        results[name] = out[0]
    return rows, float(np.max(np.abs(results["numba"] - results["numpy"])))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=50)
    args = ap.parse_args()

    sections = [
        bench_ou(PickandsGrid(1.0), "Pickands d=1", args.reps),
        bench_ou(DenseDefault(), "dense", max(5, args.reps // 5)),
        bench_windows(args.reps),
        bench_lattice(args.reps),
    ]
    print(f"{'kernel':<36} {'backend':<8} {'ms/call':>10} {'speedup':>8}")
    for rows, diff in sections:
        base = {b: dt for _, b, dt in rows}
        for kernel, backend, dt in rows:
            speed = base["numpy"] / dt
            print(f"{kernel:<36} {backend:<8} {dt * 1e3:10.3f} {speed:8.2f}")
        print(f"{'':<36} max |numba - numpy| = {diff:.3g}")


if __name__ == "__main__":
    main()
