"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

Each workload runs on both backends; the outputs must match exactly.
"""

import argparse
import sys
import time

import numpy as np

from softpath.chains import (
    TrapWalkSpec,
    ZeroRangeSpec,
    estimate_escape_prob,
    simulate_trap_walk,
    simulate_zero_range,
)
from softpath.metrics import skorohod_dist
from softpath.paths import StepPath


def _paths(n, seed=5):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        k = int(rng.integers(3, 7))
        t = np.sort(rng.choice(np.arange(1, 1000), k, replace=False)) / 1000
        out.append(StepPath.from_arrays(1.0, np.concatenate(([0.0], t)), rng.integers(1, 9, k + 1).astype(float)))
    return out


PAIRS = list(zip(_paths(150), _paths(150, seed=6)))
ZR = ZeroRangeSpec(3, 60, 3.0)
TW = TrapWalkSpec(2, 32)


def skorohod(backend):
    return [skorohod_dist(x, y, backend=backend).distance for x, y in PAIRS]


def zero_range(backend):
    return simulate_zero_range(ZR, [60, 0, 0], 0.002, 1, backend=backend).path


def trap_walk(backend):
    return simulate_trap_walk(TW, 0, 50.0, 1, theta=1.0, backend=backend).path


def escape(backend):
    return estimate_escape_prob(TrapWalkSpec(2, 32, ell=6), 4000, 1, backend=backend)


WORKLOADS = {"skorohod_dist x150": skorohod, "zero_range": zero_range, "trap_walk": trap_walk, "escape x4000": escape}


def best_of(fn, backend, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(backend)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        import softpath._core  # noqa: F401
    except ImportError:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'workload':<22}{'python [s]':>12}{'cython [s]':>12}{'speed-up':>10}  same")
    ok = True
    for name, fn in WORKLOADS.items():
        tp, op = best_of(fn, "python", args.repeat)
        tc, oc = best_of(fn, "cython", args.repeat)
        same = op == oc
        ok &= same
        print(f"{name:<22}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x  {same}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
