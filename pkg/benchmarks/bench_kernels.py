"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from terrasim import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    sparse = (rng.uniform(size=(48, 48, 48, 1)) < 0.05).astype(np.float32)
    dense = rng.normal(size=(24, 24, 24, 8)).astype(np.float32)
    yield "conv3d sparse 48^3 1->8", lambda b: kernels.conv3d(
        sparse, rng_w(1, 8), np.zeros(8, np.float32), backend=b)
    yield "conv3d dense 24^3 8->8", lambda b: kernels.conv3d(
        dense, rng_w(8, 8), np.zeros(8, np.float32), backend=b)
    pool = rng.normal(size=(64, 64, 64, 4)).astype(np.float32)
    yield "maxpool3d 64^3x4 f=2", lambda b: kernels.maxpool3d(pool, 2, backend=b)
    ref = np.column_stack([rng.uniform(0, 100, (2000, 2)), rng.normal(size=2000)])
    q = rng.uniform(0, 100, (50_000, 2))
    yield "cylinder_min_z 5e4 x 2e3 r=5", lambda b: kernels.cylinder_min_z(q, ref, 5.0, backend=b)


def rng_w(cin, cout):
    return np.random.default_rng(1).normal(size=(3, 3, 3, cin, cout)).astype(np.float32)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = sorted(kernels.BACKENDS)
    print(f"{'case':32s}" + "".join(f"{n:>12s}" for n in names) + f"{'speedup':>10s}")
    for label, fn in cases(np.random.default_rng(0)):
        t = {n: best_of(lambda: fn(n), args.repeat) for n in names}
        row = f"{label:32s}" + "".join(f"{t[n]:11.4f}s" for n in names)
        if "cython" in t:
            row += f"{t['python'] / t['cython']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
