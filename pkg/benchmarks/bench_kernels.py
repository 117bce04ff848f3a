"""Compare the compiled and numpy kernel backends, and time one training batch.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Shapes match the default network: 5 input channels, 16x16 grid, about 40
distinct frames per batch.
"""
import argparse
import time

import numpy as np

from pvnet.neuralcore import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_cases(rng, n_frames=40):
    x64 = rng.standard_normal((64, n_frames, 16, 16))
    cols = rng.standard_normal((64, 9, n_frames, 16, 16))
    planes = rng.standard_normal((64 * n_frames, 16, 16))
    rows = rng.standard_normal((64, n_frames * 256))
    slope = np.full(64, 0.25)
    pooled_grad = rng.standard_normal((64 * n_frames, 8, 8))
    n_params = 2_300_000  # about the default network's parameter count
    moments = [rng.standard_normal(n_params) for _ in range(3)] + [rng.random(n_params)]
    return {
        "im2col3x3 [64,40,16,16]": lambda b: b.im2col3x3(x64),
        "col2im3x3 [64,9,40,16,16]": lambda b: b.col2im3x3(cols),
        "maxpool fwd [2560,16,16]": lambda b: b.maxpool2x2_forward(planes),
        "maxpool bwd [2560,8,8]": lambda b: b.maxpool2x2_backward(
            pooled_grad, b.maxpool2x2_forward(planes)[1]),
        "prelu fwd [64,10240]": lambda b: b.prelu_forward(rows, slope),
        "prelu bwd [64,10240]": lambda b: b.prelu_backward(rows, rows, slope),
        "adam step [2.3M]": lambda b: b.adam_step(*moments, 0.9, 0.999, 1e-9, 1.0, 1e-8),
    }


def bench_batch(repeat):
    from pvnet.features import WINDOW
    from pvnet.model import PVNetConfig, init_params, loss_and_grads

    rng = np.random.default_rng(0)
    mcfg = PVNetConfig()
    params = init_params(mcfg, (16, 16), 5, seed=0)
    n_win = mcfg.batch_size
    frames = rng.standard_normal((5, n_win + WINDOW - 1, 16, 16))
    index = np.arange(WINDOW)[None, :] + np.arange(n_win)[:, None]
    targets = rng.random(n_win)
    return best_of(lambda: loss_and_grads(frames, index, targets, params, mcfg), repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    names = list(backends)
    print(f"{'kernel':<28}" + "".join(f"{n + ' (ms)':>14}" for n in names) + f"{'speedup':>10}")
    for label, fn in cases.items():
        t = {n: best_of(lambda: fn(backends[n]), args.repeat) for n in names}
        speed = f"{t['numpy'] / t['cython']:>9.1f}x" if "cython" in t else ""
        print(f"{label:<28}" + "".join(f"{1e3 * t[n]:>14.2f}" for n in names) + speed)
    print(f"\nactive backend: {kernels.BACKEND}")
    print(f"one training batch (32 consecutive windows, 39 frames, forward+backward): "
          f"{bench_batch(max(1, args.repeat // 2)):.3f} s")


if __name__ == "__main__":
    main()
