"""Compare the compiled and numpy patch-matrix kernels.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Times im2col, col2im and a full conv2d forward + backward at the shapes the
network uses (32 channels on a 16x16 map, 3 channels on a 64x64 image).
"""
import argparse
import time

import numpy as np

from mprnet import kernels
from mprnet.conv import conv2d
from mprnet.tensor import Tensor

SHAPES = [
    ("enc1 3x64x64 k3 s2", (1, 3, 64, 64), 32, 3, 2, 1, 1),
    ("mpr 32x16x16 k3 d2", (1, 32, 16, 16), 32, 3, 1, 2, 2),
    ("mfa 64x16x16 k3 d7", (1, 64, 16, 16), 32, 3, 1, 7, 7),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times) * 1e3


def bench(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for label, shape, cout, k, stride, pad, dil in SHAPES:
        x = rng.normal(size=shape)
        w = rng.normal(size=(cout, shape[1], k, k))
        cols = kernels.im2col(x, k, k, stride, pad, dil, backend="numpy")
        for backend in kernels.available_backends():
            kernels.BACKEND = backend

            def conv_fb():
                xt = Tensor(x, requires_grad=True)
                wt = Tensor(w, requires_grad=True)
                conv2d(xt, wt, None, stride, pad, dil).sum().backward()

            rows.append((label, backend,
                         best_of(lambda: kernels.im2col(x, k, k, stride, pad, dil, backend=backend), repeat),
                         best_of(lambda: kernels.col2im(cols, shape[1], shape[2], shape[3], k, k, stride, pad, dil,
                                                        backend=backend), repeat),
                         best_of(conv_fb, repeat)))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    active = kernels.BACKEND
    try:
        rows = bench(args.repeat)
    finally:
        kernels.BACKEND = active
    print(f"{'shape':<22}{'backend':<9}{'im2col ms':>11}{'col2im ms':>11}{'conv f+b ms':>13}")
    for label, backend, a, b, c in rows:
        print(f"{label:<22}{backend:<9}{a:>11.3f}{b:>11.3f}{c:>13.3f}")


if __name__ == "__main__":
    main()
