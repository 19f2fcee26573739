"""Time the jitted kernels against the pure-numpy fallback.

Runs every kernel from ``tabclust._kernels`` on benchmark-sized inputs
under both backends, checks that the two agree, and prints a timing
table.  Jit compilation happens in a warmup pass so the numbers compare
steady-state throughput only.

    python3 benchmarks/bench_kernels.py [--repeats 7] [--inner 10]
"""

import argparse
import time

import numpy as np

from tabclust._kernels import numpy_kernels
from tabclust.rng import Rng


def _cases():
    rng = Rng(0)
    x1 = rng.spawn("x1").normal((256, 1, 128))
    k1 = rng.spawn("k1").normal((16, 1, 5))
    y1 = rng.spawn("y1").normal((256, 16, 62))
    x2 = rng.spawn("x2").normal((256, 16, 62))
    k2 = rng.spawn("k2").normal((32, 16, 5))
    y2 = rng.spawn("y2").normal((256, 32, 29))
    return [
        (
            "pairwise_sqdist 2048x32 vs 16",
            "pairwise_sqdist",
            (rng.spawn("a").normal((2048, 32)), rng.spawn("b").normal((16, 32))),
        ),
        (
            "conv1d_fwd 256x1x128 c16 w5 s2",
            "conv1d_fwd",
            (x1, k1, rng.spawn("b1").normal((16,)), 2),
        ),
        (
            "conv1d_fwd 256x16x62 c32 w5 s2",
            "conv1d_fwd",
            (x2, k2, rng.spawn("b2").normal((32,)), 2),
        ),
        ("conv1d_bwd_input layer 1", "conv1d_bwd_input", (y1, k1, 2, 128)),
        ("conv1d_bwd_input layer 2", "conv1d_bwd_input", (y2, k2, 2, 62)),
        ("conv1d_bwd_kernel layer 2", "conv1d_bwd_kernel", (x2, y2, 2, 5)),
        (
            "gaussian_diag_logpdf 4096x64 k8",
            "gaussian_diag_logpdf",
            (
                rng.spawn("gx").normal((4096, 64)),
                rng.spawn("gm").normal((8, 64)),
                rng.spawn("gv").random((8, 64)) + 0.5,
            ),
        ),
    ]


def _best_time(fn, args, repeats: int, inner: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / inner)
    return best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--inner", type=int, default=10)
    args = parser.parse_args(argv)

    plain = numpy_kernels()
    try:
        from tabclust._kernels import numba_kernels

        jitted = numba_kernels()
    except ImportError:
        jitted = None
        print("numba not importable; timing the numpy fallback only\n")

    header = f"{'case':34} {'numpy':>10} {'numba':>10} {'speedup':>8} {'max diff':>9}"
    print(header)
    print("-" * len(header))
    for label, name, case_args in _cases():
        base = plain[name](*case_args)
        t_np = _best_time(plain[name], case_args, args.repeats, args.inner)
        if jitted is None:
            print(f"{label:34} {t_np * 1e3:9.3f}ms {'-':>10} {'-':>8} {'-':>9}")
            continue
        fast = jitted[name](*case_args)   # first call also compiles
        diff = float(np.max(np.abs(np.asarray(fast) - np.asarray(base))))
        t_nb = _best_time(jitted[name], case_args, args.repeats, args.inner)
        print(
            f"{label:34} {t_np * 1e3:9.3f}ms {t_nb * 1e3:9.3f}ms "
            f"{t_np / t_nb:7.1f}x {diff:9.1e}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
