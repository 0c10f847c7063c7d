"""Time the numba kernels against the pure numpy/Python fallbacks.

    python benchmarks/bench_kernels.py [--accesses N] [--repeat R]

Numba compile time is reported separately from steady-state time.  Both
backends must produce identical results; the script exits non-zero if not.
"""

import argparse
import sys
import time

import numpy as np

from approxpart import kernels
from approxpart._accel import HAVE_NUMBA


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--accesses", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 1

    rng = np.random.default_rng(args.seed)
    n = args.accesses
    lines = rng.integers(0, 1 << 14, n).astype(np.int64)
    members = rng.integers(0, 6, n).astype(np.int64)

    cases = [
        ("lru 64 sets x 8 ways", lambda be: kernels.lru_miss_flags(lines, 64, 8, backend=be)),
        ("affinity 6 members thr 3", lambda be: kernels.affinity_counts(members, 6, 3, backend=be)),
    ]
    print(f"{n} accesses, best of {args.repeat}")
    print(f"{'kernel':<26} {'compile':>9} {'numba':>9} {'numpy':>9} {'speedup':>8}")
    ok = True
    for name, run in cases:
        t0 = time.perf_counter()
        run("numba")  # first call includes compilation, unless cached on disk
        compile_s = time.perf_counter() - t0
        t_nb, r_nb = best_of(lambda: run("numba"), args.repeat)
        t_np, r_np = best_of(lambda: run("numpy"), args.repeat)
        same = np.array_equal(r_nb, r_np)
        ok &= same
        print(
            f"{name:<26} {compile_s:>8.3f}s {t_nb:>8.3f}s {t_np:>8.3f}s {t_np / t_nb:>7.1f}x"
            + ("" if same else "  MISMATCH")
        )
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
