"""Benchmark the compiled scoring kernel against the pure-numpy fallback.

Workloads mirror the real hot paths: fill-in-the-blank candidate scoring,
beam-search slot extension and whole-outfit pair scoring.

Run:  python benchmarks/bench_kernels.py
"""
import time

import numpy as np

from stylecompat import kernels


def _workload(n, m, d=64, C=6, seed=0):
    rng = np.random.default_rng(seed)
    xa = rng.normal(size=(n, d))
    xb = rng.normal(size=(m, d))
    ca = rng.integers(0, C, size=n).astype(np.intp)
    cb = rng.integers(0, C, size=m).astype(np.intp)
    gates = np.ascontiguousarray(rng.normal(size=(C, C, d)))
    return xa, ca, xb, cb, gates


def _time(fn, *args, repeats=2000):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    backends = kernels.available_backends()
    print(f"available backends: {sorted(backends)} (selected: {kernels.BACKEND})")
    cases = [
        ("FITB candidates (4x5)", _workload(4, 5), 5000),
        ("outfit score (6x6)", _workload(6, 6), 5000),
        ("beam extension (64x5)", _workload(64, 5), 2000),
        ("beam extension (256x5)", _workload(256, 5), 500),
        ("bulk rerank (512x64)", _workload(512, 64), 20),
    ]
    header = f"{'case':<24}" + "".join(f"{name:>14}" for name in sorted(backends)) + f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, (xa, ca, xb, cb, gates), repeats in cases:
        times = {}
        for bname, backend in backends.items():
            times[bname] = _time(backend.cond_dist_matrix, xa, ca, xb, cb, gates, repeats=repeats)
        row = f"{name:<24}" + "".join(f"{times[b] * 1e6:>12.1f}us" for b in sorted(backends))
        if "fast" in times:
            row += f"{times['numpy'] / times['fast']:>9.1f}x"
        print(row)

        a = backends["numpy"].cond_dist_matrix(xa, ca, xb, cb, gates)
        for bname, backend in backends.items():
            b = backend.cond_dist_matrix(xa, ca, xb, cb, gates)
            assert np.allclose(a, b, atol=1e-10), f"{bname} disagrees with numpy"


if __name__ == "__main__":
    main()
