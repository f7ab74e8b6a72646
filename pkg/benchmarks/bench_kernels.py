"""Benchmark the compiled kernel against the NumPy fallback.

Times the fused projection+max update on blocked ingestion, per-item
streaming, and a small-sketch configuration.  Both backends issue the same
BLAS calls; the compiled core saves the product materialization and the
second reduction pass.

    python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from maxsketch._kernels_py import max_inner_update as numpy_kernel

try:
    from maxsketch._core import max_inner_update as compiled_kernel
except ImportError:
    compiled_kernel = None


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(name, m, d, n, item_by_item, repeats):
    rng = np.random.default_rng(0)
    vectors = rng.standard_normal((m, d))
    items = rng.standard_normal((n, d))
    items /= np.linalg.norm(items, axis=1, keepdims=True)
    flops = 2.0 * m * d * n

    def run(kernel):
        out = np.full(m, -np.inf)
        if item_by_item:
            for i in range(n):
                kernel(out, vectors, items[i : i + 1])
        else:
            kernel(out, vectors, items)
        return out

    rows = []
    baseline = None
    for label, kernel in [("numpy", numpy_kernel), ("compiled", compiled_kernel)]:
        if kernel is None:
            rows.append((label, None, None, None))
            continue
        run(kernel)  # warm up
        sec = time_call(lambda: run(kernel), repeats)
        if label == "numpy":
            baseline = sec
        rows.append((label, sec, flops / sec / 1e9, baseline / sec if baseline else None))
    print(f"\n{name}  (m={m}, d={d}, n={n})")
    for label, sec, gflops, speedup in rows:
        if sec is None:
            print(f"  {label:<9} extension not built")
        else:
            rel = f"{speedup:.2f}x vs numpy" if speedup else ""
            print(f"  {label:<9} {sec * 1e3:9.1f} ms   {gflops:7.1f} GFLOP/s   {rel}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller sizes, fewer repeats")
    args = parser.parse_args()
    repeats = 3 if args.quick else 5
    scale = 4 if args.quick else 1

    if compiled_kernel is None:
        print("compiled extension not built; timing the NumPy fallback only")

    bench_case("blocked ingestion", m=4096, d=512, n=2000 // scale, item_by_item=False,
               repeats=repeats)
    bench_case("per-item streaming", m=4096, d=512, n=400 // scale, item_by_item=True,
               repeats=repeats)
    bench_case("small sketch, long stream", m=256, d=64, n=200_000 // scale,
               item_by_item=False, repeats=repeats)


if __name__ == "__main__":
    main()
