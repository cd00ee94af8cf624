"""Benchmark the compiled convolution kernels against the numpy fallback.

Times the three kernel entry points (forward, input gradient, weight
gradient) on the encoder's actual layer shapes for a 64x96 rendering.
Both backends run in the same process; the compiled one is skipped with
a note if the extension was not built.

    python3 benchmarks/bench_kernels.py [--repeats N] [--warmup N]
"""

import argparse
import time

import numpy as np

from tsgeo.kernels import pykernels

try:
    from tsgeo.kernels import _native
except ImportError:
    _native = None

# (label, in_channels, height, width, out_channels) for each encoder
# stage, kernel 3x3, stride 2, pad 1
LAYERS = [
    ("enc1", 1, 64, 96, 16),
    ("enc2", 16, 32, 48, 32),
    ("enc3", 32, 16, 24, 64),
    ("enc4", 64, 8, 12, 128),
]


def layer_arrays(c_in, h, w, c_out, rng):
    x = rng.standard_normal((c_in, h, w))
    weights = rng.standard_normal((c_out, c_in, 3, 3))
    h_out = (h + 2 - 3) // 2 + 1
    w_out = (w + 2 - 3) // 2 + 1
    gy = rng.standard_normal((c_out, h_out, w_out))
    return x, weights, gy


def time_call(fn, repeats, warmup):
    for _ in range(warmup):
        fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(impl, repeats, warmup):
    rng = np.random.default_rng(0)
    rows = []
    for label, c_in, h, w, c_out in LAYERS:
        x, weights, gy = layer_arrays(c_in, h, w, c_out, rng)
        calls = {
            "forward": lambda: impl.conv2d_forward(x, weights, 2, 1),
            "input_grad": lambda: impl.conv2d_input_grad(gy, weights, 2, 1,
                                                         h, w),
            "weight_grad": lambda: impl.conv2d_weight_grad(x, gy, 2, 1, 3, 3),
        }
        for op, fn in calls.items():
            rows.append((label, op, time_call(fn, repeats, warmup)))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20,
                        help="timed runs per case, best is kept")
    parser.add_argument("--warmup", type=int, default=3)
    args = parser.parse_args()

    numpy_rows = bench_backend(pykernels, args.repeats, args.warmup)
    native_rows = (bench_backend(_native, args.repeats, args.warmup)
                   if _native is not None else None)

    print(f"{'layer':<6} {'op':<12} {'numpy ms':>10} {'native ms':>10} "
          f"{'speedup':>8}")
    for i, (label, op, t_np) in enumerate(numpy_rows):
        if native_rows is None:
            print(f"{label:<6} {op:<12} {t_np * 1e3:>10.3f} {'-':>10} "
                  f"{'-':>8}")
        else:
            t_nat = native_rows[i][2]
            print(f"{label:<6} {op:<12} {t_np * 1e3:>10.3f} "
                  f"{t_nat * 1e3:>10.3f} {t_np / t_nat:>7.1f}x")
    if native_rows is None:
        print("\ncompiled extension not built; showing numpy fallback only")
    else:
        total_np = sum(r[2] for r in numpy_rows)
        total_nat = sum(r[2] for r in native_rows)
        print(f"\ntotals: numpy {total_np * 1e3:.2f} ms, native "
              f"{total_nat * 1e3:.2f} ms, {total_np / total_nat:.1f}x")


if __name__ == "__main__":
    main()
