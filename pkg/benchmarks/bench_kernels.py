"""Compiled vs pure-Python kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from localtime import kernels


def cases(rng):
    d, n = 512, 64
    rho = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    level_of = np.sort(rng.integers(0, n, d)).astype(np.intp)
    coeff = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    times = np.linspace(0.0, 500.0, 4000)
    freqs = rng.standard_normal((32, 256))
    weights = rng.random((32, 256))
    return {
        "schur_apply d=512": lambda b: b.schur_apply(rho, level_of, coeff),
        "phase_sum 4000x32x256": lambda b: b.phase_sum(times, freqs, weights),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    rng = np.random.default_rng(0)
    for label, fn in cases(rng).items():
        timings = {}
        for name in backends:
            b = kernels.get_backend(name)
            fn(b)
            timings[name] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
        line = "  ".join(f"{k}={v * 1e3:8.2f} ms" for k, v in timings.items())
        if len(timings) == 2:
            line += f"  speedup={timings['python'] / timings['cython']:.2f}x"
        print(f"{label:26s} {line}")


if __name__ == "__main__":
    main()
