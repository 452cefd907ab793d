"""Benchmark the numba kernels against the pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [--quick]

Useful together with the backend env flag, e.g.
``KINETICFLOW_NUMBA=0 python -m pytest`` runs the whole suite on the
fallback path; this script times both paths in one process.
"""
import argparse
import time

import numpy as np

from kineticflow import _kernels
from kineticflow._rng import stream_keys


def timed(fn, *args, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args()

    if not _kernels.HAVE_NUMBA:
        print("numba not importable; only the numpy path is available")
        return

    scale = 0.2 if args.quick else 1.0
    R = int(400 * scale) or 1
    n_steps = int(5000 * scale)
    d = 8
    alpha = 1.0 / np.sqrt(1.0 + np.arange(d))
    keys = stream_keys(0, R)
    v0s = np.zeros((R, d))
    v0s[:, 0] = 1.0
    chk = np.array([0, n_steps // 2, n_steps], dtype=np.int64)

    print(f"workload: R={R} replicas x {n_steps} steps, d={d}")
    rows = []

    # warm up the JIT before timing
    _kernels.nb_velocity_paths(keys[:2], v0s[:2], alpha, 1.0, 1e-3, 10, chk[:1] * 0)
    t_nb = timed(_kernels.nb_velocity_paths, keys, v0s, alpha, 1.0, 1e-3, n_steps, chk)
    t_np = timed(_kernels.np_velocity_paths, keys, v0s, alpha, 1.0, 1e-3, n_steps, chk)
    rows.append(("velocity_paths", t_nb, t_np))

    _kernels.nb_position_paths(keys[:2], v0s[:2], alpha, 1.0, 1e-3, 10, chk[:1] * 0, True)
    t_nb = timed(_kernels.nb_position_paths, keys, v0s, alpha, 1.0, 1e-3, n_steps, chk, True)
    t_np = timed(_kernels.np_position_paths, keys, v0s, alpha, 1.0, 1e-3, n_steps, chk, True)
    rows.append(("position_paths+level2", t_nb, t_np))

    w0s = np.zeros((R, d))
    w0s[:, 1] = 1.0
    _kernels.nb_coupled_paths(keys[:2], v0s[:2], w0s[:2], alpha, 1e-3, 10, 5)
    t_nb = timed(_kernels.nb_coupled_paths, keys, v0s, w0s, alpha, 1e-3, n_steps, 100)
    t_np = timed(_kernels.np_coupled_paths, keys, v0s, w0s, alpha, 1e-3, n_steps, 100)
    rows.append(("coupled_paths", t_nb, t_np))

    P = int(20000 * scale)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 2 * np.pi, (P, 2))
    kvecs = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0], [2.0, 0.0]])
    c = rng.standard_normal(10)
    drift = np.zeros(2)
    _kernels.nb_advect_rk4(pts[:8].copy(), kvecs, c, c, c, 1e-3, drift)

    def adv_nb():
        q = pts.copy()
        for _ in range(20):
            _kernels.nb_advect_rk4(q, kvecs, c, c, c, 1e-3, drift)

    def adv_np():
        q = pts.copy()
        for _ in range(20):
            _kernels.np_advect_rk4(q, kvecs, c, c, c, 1e-3, drift)

    rows.append(("advect_rk4 x20", timed(adv_nb), timed(adv_np)))

    print(f"{'kernel':<24}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, t_nb, t_np in rows:
        print(f"{name:<24}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.1f}x")


if __name__ == "__main__":
    main()
