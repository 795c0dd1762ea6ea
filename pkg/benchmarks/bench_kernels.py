"""Compare the compiled and pure-Python plant kernels.

Usage: python benchmarks/bench_kernels.py [--steps N] [--repeat R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from floatgnc import kernels
from floatgnc.model import PlatformParams
from floatgnc.simworld import Heightmap, step_plant


def run(backend, steps, chunk, hmap, params):
    x = np.array([0.3, -0.2, 0.5, 0.01, -0.02, 0.03, 5.0])
    valves = np.array([1, 0, 0, 1, 0, 0, 1, 0], dtype=bool)
    t0 = time.perf_counter()
    for _ in range(steps // chunk):
        x, _, _ = step_plant(x, valves, 0.05, np.zeros(3), hmap, params, 0.001, chunk, backend=backend)
    return time.perf_counter() - t0, x


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--chunk", type=int, default=10, help="plant steps per call (10 = one control tick)")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    params = PlatformParams()
    hmap = Heightmap.random_field(np.random.default_rng(0), 1e-3)
    backends = ["python"] + (["compiled"] if kernels.compiled_available() else [])
    results = {}
    for b in backends:
        best = min(run(b, args.steps, args.chunk, hmap, params)[0] for _ in range(args.repeat))
        results[b] = best
        print(f"{b:>9}: {best:.3f} s for {args.steps} steps ({1e6 * best / args.steps:.2f} us/step)")
    if len(results) == 2:
        _, xa = run("python", 1000, args.chunk, hmap, params)
        _, xb = run("compiled", 1000, args.chunk, hmap, params)
        print(f"speed-up: {results['python'] / results['compiled']:.1f}x, "
              f"max state difference after 1000 steps: {np.max(np.abs(xa - xb)):.2e}")
    else:
        print("compiled extension not built; only the Python backend was timed")


if __name__ == "__main__":
    main()
