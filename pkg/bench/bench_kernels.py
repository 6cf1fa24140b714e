"""Compare the compiled and numpy point-cloud kernels on identical inputs.

Usage: python bench/bench_kernels.py [--reps N] [--csv out.csv]
"""
from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from omnilens._kernels import _reference

try:
    from omnilens._kernels import _fast
except ImportError:
    _fast = None

# (points, centers g, neighbours k): desk default, a paper-like 8192/512/32 cloud, and a mid size
CASES = [(256, 32, 16), (1024, 64, 32), (8192, 512, 32)]


def best_of(fn, reps):
    times = []
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def run(reps):
    rows = []
    rng = np.random.default_rng(0)
    for n, g, k in CASES:
        pts = rng.standard_normal((n, 3))
        centers = pts[_reference.fps(pts, g, 0)]
        row = {"points": n, "g": g, "k": k}
        for name, impl in (("numpy", _reference), ("cython", _fast)):
            if impl is None:
                row[f"{name}_fps_ms"] = row[f"{name}_knn_ms"] = float("nan")
                continue
            row[f"{name}_fps_ms"] = 1e3 * best_of(lambda: impl.fps(pts, g, 0), reps)
            row[f"{name}_knn_ms"] = 1e3 * best_of(lambda: impl.knn(pts, centers, k), reps)
        if _fast is not None:
            same = np.array_equal(_fast.fps(pts, g, 0), _reference.fps(pts, g, 0)) and np.array_equal(
                _fast.knn(pts, centers, k), _reference.knn(pts, centers, k)
            )
            row["identical"] = same
            row["fps_speedup"] = row["numpy_fps_ms"] / row["cython_fps_ms"]
            row["knn_speedup"] = row["numpy_knn_ms"] / row["cython_knn_ms"]
        rows.append(row)
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--csv", help="also write the table here")
    args = parser.parse_args(argv)
    if _fast is None:
        print("compiled kernels not built; only the numpy backend is timed", file=sys.stderr)
    rows = run(args.reps)
    fields = list(rows[0])
    out = [csv.DictWriter(sys.stdout, fieldnames=fields, lineterminator="\n")]
    if args.csv:
        fh = open(args.csv, "w", newline="")
        out.append(csv.DictWriter(fh, fieldnames=fields, lineterminator="\n"))
    for w in out:
        w.writeheader()
        for r in rows:
            w.writerow({key: f"{v:.4g}" if isinstance(v, float) else v for key, v in r.items()})
    if args.csv:
        fh.close()


if __name__ == "__main__":
    main()
