"""Benchmark the compiled extension kernels against the numpy fallback.

Usage: python benchmarks/bench_backends.py [--repeats N]

Times the three hot kernels (im2col, col2im, jacobi_sweep) on workloads
matching the shapes the pipeline actually uses, and verifies that both
backends produce bit-identical results while timing them.
"""

import argparse
import time

import numpy as np

from dss.backend import py_kernels

try:
    from dss.backend import _kernels
except ImportError:
    _kernels = None


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def bench(name, make_args, run, repeats):
    args = make_args()
    fallback_t, fallback_out = _time(lambda: run(py_kernels, *args), repeats)
    line = f"{name:<14} fallback {fallback_t * 1e3:8.3f} ms"
    if _kernels is not None:
        compiled_t, compiled_out = _time(lambda: run(_kernels, *args), repeats)
        if not isinstance(fallback_out, tuple):
            fallback_out, compiled_out = (fallback_out,), (compiled_out,)
        identical = all(
            np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b
            for a, b in zip(fallback_out, compiled_out))
        line += (f"   compiled {compiled_t * 1e3:8.3f} ms"
                 f"   speedup {fallback_t / compiled_t:5.2f}x"
                 f"   identical {identical}")
    else:
        line += "   (compiled backend not built)"
    print(line)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    # conv1 of the classifier: batch 64, 1x32x32 padded input, 5x5 kernel
    x1 = rng.standard_normal((64, 1, 32, 32))
    bench("im2col conv1", lambda: (x1, 5, 5),
          lambda k, x, kh, kw: k.im2col(x, kh, kw), args.repeats)

    # conv2: batch 64, 6x14x14 input, 5x5 kernel
    x2 = rng.standard_normal((64, 6, 14, 14))
    bench("im2col conv2", lambda: (x2, 5, 5),
          lambda k, x, kh, kw: k.im2col(x, kh, kw), args.repeats)

    cols = py_kernels.im2col(x2, 5, 5)
    bench("col2im conv2", lambda: (cols, 6, 14, 14, 5, 5),
          lambda k, c, ch, h, w, kh, kw: k.col2im(c, ch, h, w, kh, kw),
          args.repeats)

    # inpainting sweep on a 28x28 image with a 3% hole mask
    img = rng.random((1, 28, 28))
    holes = np.zeros((28, 28), dtype=np.uint8)
    flat = rng.choice(784, size=23, replace=False)
    holes.ravel()[flat] = 1
    bench("jacobi_sweep", lambda: (img, holes),
          lambda k, im, h: k.jacobi_sweep(im, h), args.repeats)


if __name__ == "__main__":
    main()
