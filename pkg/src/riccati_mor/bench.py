"""Benchmark the compiled kernel extension against the pure numpy fallback.

The hot kernels are the Schur decomposition and the quasi-triangular
back-substitutions behind the Lyapunov/Riccati solves; everything else is
BLAS-bound and identical across backends.
"""

import time

import numpy as np

from .kernels import available_backends, real_schur, solve_dense_are, solve_lyapunov, use_backend

__all__ = ["run_benchmark"]


def _stable_instance(rng, n):
    a = rng.standard_normal((n, n))
    a -= (np.linalg.eigvals(a).real.max() + 1.0) * np.eye(n)
    b = rng.standard_normal((n, 1))
    c = rng.standard_normal((1, n))
    q = rng.standard_normal((n, n))
    return a, b, c, q + q.T


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmark(sizes=(60, 120, 240, 441), repeats=2, seed=0):
    """Print best-of-N timings per backend and the resulting speedups."""
    backends = available_backends()
    rng = np.random.default_rng(seed)
    print("kernel benchmark, backends: {}".format(", ".join(backends)))
    header = "{:>10s} {:>5s}".format("kernel", "n")
    for name in backends:
        header += " {:>12s}".format(name + " [s]")
    if len(backends) == 2:
        header += " {:>9s}".format("speedup")
    print(header)
    results = []
    for n in sizes:
        a, b, c, q = _stable_instance(rng, n)
        workloads = [
            ("schur", lambda: real_schur(a)),
            ("lyapunov", lambda: solve_lyapunov(a, q)),
        ]
        if n <= 240:
            workloads.append(("dense_are", lambda: solve_dense_are(a, b, c, np.eye(1))))
        for label, fn in workloads:
            times = {}
            for name in backends:
                with use_backend(name):
                    times[name] = _time(fn, repeats)
            row = "{:>10s} {:>5d}".format(label, n)
            for name in backends:
                row += " {:>12.4f}".format(times[name])
            if "compiled" in times and "python" in times:
                row += " {:>8.1f}x".format(times["python"] / times["compiled"])
            print(row)
            results.append((label, n, times))
    return results


if __name__ == "__main__":
    run_benchmark()
