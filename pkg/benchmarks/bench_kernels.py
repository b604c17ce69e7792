"""Compare the numba kernel path against the pure-numpy fallback.

Run with the package installed:

    python benchmarks/bench_kernels.py

The active backend follows MOARM_NUMBA; this script times both
implementations side by side regardless of which one the package selected.
"""

from __future__ import annotations

import time

import numpy as np

from moarm import kernels


def timeit(fn, *args, repeats=30):
    fn(*args)  # warm up (includes JIT compilation for the numba path)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def main():
    rng = np.random.default_rng(0)
    shapes = [(64, 128), (512, 256), (4096, 512)]
    numba_available = kernels.BACKEND == "numba"
    if not numba_available:
        print("numba backend unavailable or disabled (MOARM_NUMBA); showing numpy only")

    rows = []
    for n, m in shapes:
        x = rng.normal(size=(n, 64))
        w = rng.normal(size=(64, m))
        b = rng.normal(size=m)
        z = rng.normal(size=(n, m))
        g = rng.normal(size=(n, m))
        y = (rng.random((n, m)) < 0.5).astype(np.float64)
        wt = rng.random((n, m))
        mu, logs, tgt = z, 0.3 * g, z + 0.1

        cases = [
            ("affine_rows", ("affine_rows",), (x, w, b)),
            ("silu_fwd", ("silu_fwd",), (z,)),
            ("silu_bwd", ("silu_bwd",), (z, g)),
            ("gauss_wsum", ("gauss_wsum",), (mu, logs, tgt, wt)),
            ("gauss_wsum_bwd", ("gauss_wsum_bwd",), (mu, logs, tgt, wt, 1.0)),
            ("bce_wsum", ("bce_wsum",), (z, y, wt)),
            ("bce_wsum_bwd", ("bce_wsum_bwd",), (z, y, wt, 1.0)),
        ]
        for name, (key,), args in cases:
            t_np = timeit(kernels.numpy_impl[key], *args)
            if numba_available:
                t_nb = timeit(getattr(kernels, key), *args)
                rows.append((f"{name} ({n}x{m})", t_np, t_nb, t_np / t_nb))
            else:
                rows.append((f"{name} ({n}x{m})", t_np, None, None))

    header = f"{'kernel':34} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, t_np, t_nb, speedup in rows:
        if t_nb is None:
            print(f"{name:34} {t_np:10.3f} {'-':>10} {'-':>8}")
        else:
            print(f"{name:34} {t_np:10.3f} {t_nb:10.3f} {speedup:7.2f}x")


if __name__ == "__main__":
    main()
