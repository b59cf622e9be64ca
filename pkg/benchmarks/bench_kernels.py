"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on identical inputs under both backends; the script checks the
outputs agree and prints the best-of-``repeat`` wall time and the speedup.
"""

import argparse
import time

import numpy as np

from marginalpriv._kernels import implementations


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def cases(rng):
    tall = np.packbits(rng.random((200_000, 256)) < 0.5, axis=1, bitorder="little")
    wide = np.packbits(rng.random((40, 400_000)) < 0.5, axis=1, bitorder="little")
    yield "column_counts 200000x256", "column_counts", (tall, 256)
    yield "column_counts 40x400000", "column_counts", (wide, 400_000)

    k, c = 100_000, 200
    values = rng.uniform(-0.05, 0.05, k)
    values[rng.choice(k, 150, replace=False)] = 0.4
    sv_args = (values, rng.laplace(0, 0.01, k), rng.laplace(0, 0.005, c), rng.laplace(0, 0.002, c), 0.15, 0)
    yield "sv_scan k=100000 c=200", "sv_scan", sv_args

    w = rng.normal(size=400_000)
    yield "masked_row_sums 40x400000", "masked_row_sums", (wide, w)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    impls = implementations()
    if "cython" not in impls:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'kernel':<28}{'python (s)':>12}{'cython (s)':>12}{'speedup':>10}")
    for label, name, kernel_args in cases(np.random.default_rng(args.seed)):
        py_t, py_out = best_time(lambda: getattr(impls["python"], name)(*kernel_args), args.repeat)
        if "cython" not in impls:
            print(f"{label:<28}{py_t:>12.4f}{'-':>12}{'-':>10}")
            continue
        cy_t, cy_out = best_time(lambda: getattr(impls["cython"], name)(*kernel_args), args.repeat)
        if name == "masked_row_sums":
            assert np.allclose(py_out, cy_out, rtol=0, atol=1e-8)
        elif name == "sv_scan":
            assert all(np.array_equal(a, b) for a, b in zip(py_out, cy_out))
        else:
            assert np.array_equal(py_out, cy_out)
        print(f"{label:<28}{py_t:>12.4f}{cy_t:>12.4f}{py_t / cy_t:>9.1f}x")


if __name__ == "__main__":
    main()
