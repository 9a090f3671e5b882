"""Benchmark the numba kernels against the pure-numpy fallbacks.

Runs each hot kernel through both implementations on realistic shapes,
checks they agree, and prints timings with the speedup.  The import-time
path selection (WILDLOOP_NO_NUMBA) is orthogonal: this script always calls
both private implementations directly.

Usage:
    python benchmarks/bench_kernels.py [--repeats N]
"""
import argparse
import time

import numpy as np

from wildloop import kernels


def timeit(func, *args, repeats=5):
    best = float("inf")
    out = None
    for _ in range(repeats):
        start = time.perf_counter()
        out = func(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def as_scalar_loss(result):
    return result[0] if isinstance(result, tuple) else result


def bench(name, nb_func, np_func, args, check, repeats):
    if kernels.NUMBA_ENABLED:
        nb_func(*args)  # trigger JIT before timing
    t_nb, out_nb = timeit(nb_func, *args, repeats=repeats)
    t_np, out_np = timeit(np_func, *args, repeats=repeats)
    check(out_nb, out_np)
    speedup = t_np / t_nb if t_nb > 0 else float("inf")
    print(f"{name:<28} numba {t_nb * 1e3:8.2f} ms   numpy {t_np * 1e3:8.2f} ms   "
          f"speedup {speedup:5.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    repeats = args.repeats

    print(f"numba enabled in active path: {kernels.NUMBA_ENABLED}")
    rng = np.random.default_rng(0)

    src_u8 = rng.integers(0, 256, size=(960, 1280, 3)).astype(np.uint8)
    bench(
        "resize_nearest 1280->224",
        kernels._resize_nearest_nb, kernels._resize_nearest_np,
        (src_u8, 224),
        lambda a, b: np.testing.assert_array_equal(a, b),
        repeats,
    )

    src_f64 = src_u8.astype(np.float64)
    bench(
        "resize_bilinear 1280->224",
        kernels._resize_bilinear_nb, kernels._resize_bilinear_np,
        (src_f64, 224),
        lambda a, b: np.testing.assert_allclose(a, b, atol=1e-9),
        repeats,
    )

    crop = rng.integers(0, 256, size=(224, 224, 3)).astype(np.float64)
    bench(
        "rotate_bilinear 224x224",
        kernels._rotate_bilinear_nb, kernels._rotate_bilinear_np,
        (crop, np.deg2rad(17.0)),
        lambda a, b: np.testing.assert_allclose(a, b, atol=1e-9),
        repeats,
    )

    def check_grad(a, b_):
        np.testing.assert_allclose(a[0], b_[0], rtol=1e-10)
        np.testing.assert_allclose(a[1], b_[1], atol=1e-10)
        np.testing.assert_allclose(a[2], b_[2], atol=1e-10)

    # Training calls this once per minibatch (default 64), where the loop
    # kernel beats BLAS call overhead; the crossover sits near n = 256.
    for n, d, g in ((64, 16, 5), (4096, 64, 8)):
        X = rng.standard_normal((n, d))
        y = rng.integers(0, g, size=n)
        sw = rng.uniform(0.5, 2.0, size=n)
        W = rng.standard_normal((g, d)) * 0.2
        b = rng.standard_normal(g) * 0.1
        bench(
            f"softmax_xent {n}x{d}x{g}",
            kernels._softmax_xent_nb, kernels._softmax_xent_np,
            (X, y, sw, W, b, 1e-4),
            check_grad,
            repeats,
        )


if __name__ == "__main__":
    main()
