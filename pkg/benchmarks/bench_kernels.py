"""Time the numba and numpy kernel backends on problem-sized inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat R] [--sizes 512,1024,2048]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from fracheat import _backend


def _best(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--sizes", default="512,1024,2048")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    backends = ["numpy"] + (["numba"] if _backend.HAVE_NUMBA else [])
    print(f"{'kernel':<14}{'n':>7}" + "".join(f"{b:>12}" for b in backends) + f"{'max rel diff':>15}")
    for n in (int(v) for v in args.sizes.split(",")):
        x = np.sort(rng.uniform(-1.0, 1.0, n))
        y = np.sort(rng.uniform(1.5, 2.5, 4 * n))
        W = rng.standard_normal((4 * n, 4))
        cases = {
            "kernel_apply": lambda b: _backend.kernel_apply(x, y, W, 2.5, backend=b),
        }
        yp = np.sort(rng.uniform(-1.0, 1.0, n))
        wp = rng.uniform(0.0, 2.0 / n, n)
        pid = np.arange(n) // 8
        U = rng.standard_normal((n, 4))
        cases["pair_sum"] = lambda b: _backend.pair_sum(yp, wp, pid, U, U, 2.5, backend=b)
        for name, fn in cases.items():
            outs = {b: fn(b) for b in backends}  # also triggers numba compilation
            times = [_best(lambda b=b: fn(b), args.repeat) for b in backends]
            ref = outs["numpy"]
            diff = max(np.max(np.abs(o - ref)) / np.max(np.abs(ref)) for o in outs.values())
            print(f"{name:<14}{n:>7}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times) + f"{diff:>15.2e}")


if __name__ == "__main__":
    main()
