#!/usr/bin/env python3
"""Compare the compiled and pure-Python ZNCC search kernels.

Times both backends on identical inputs across a range of search radii and
reports per-call latency, speedup, and the maximum numerical disagreement.

Usage: python3 benchmarks/bench_backends.py [--repeats N] [--size 128]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from voltseg import kernels
from voltseg.motion import PatchGrid


def best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20,
                    help="timing repeats per backend (best-of is reported)")
    ap.add_argument("--size", type=int, default=128, help="frame side length")
    ap.add_argument("--patch", type=int, default=16, help="ZNCC patch size")
    ap.add_argument("--radii", type=int, nargs="+", default=[2, 5, 10],
                    help="search radii to benchmark")
    args = ap.parse_args()

    if not kernels.HAVE_NATIVE:
        raise SystemExit("compiled extension not available; nothing to compare")

    rng = np.random.default_rng(0)
    frame = rng.random((args.size, args.size), dtype=np.float32)
    reference = rng.random((args.size, args.size), dtype=np.float32)

    print(f"frame {args.size}x{args.size}, patch {args.patch}, "
          f"best of {args.repeats}")
    print(f"{'radius':>6} {'patches':>8} {'native ms':>10} {'python ms':>10} "
          f"{'speedup':>8} {'max |diff|':>11}")
    for radius in args.radii:
        grid = PatchGrid.cover(args.size, args.size, args.patch, margin=radius)
        origins = grid.origins
        nat = kernels._backends["native"](
            np.ascontiguousarray(frame), np.ascontiguousarray(reference),
            np.ascontiguousarray(origins, dtype=np.int32), args.patch, radius)
        py = kernels.mean_zncc_scores_py(frame, reference, origins,
                                         args.patch, radius)
        diff = float(np.abs(np.asarray(nat) - py).max())

        t_nat = best_of(lambda: kernels._backends["native"](
            np.ascontiguousarray(frame), np.ascontiguousarray(reference),
            np.ascontiguousarray(origins, dtype=np.int32), args.patch, radius),
            args.repeats)
        t_py = best_of(lambda: kernels.mean_zncc_scores_py(
            frame, reference, origins, args.patch, radius), args.repeats)
        print(f"{radius:>6} {len(origins):>8} {t_nat * 1e3:>10.3f} "
              f"{t_py * 1e3:>10.3f} {t_py / t_nat:>8.1f}x {diff:>11.2e}")


if __name__ == "__main__":
    main()
