"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--threads N]

Both paths run in one process. The path is switched through KFPKIT_NUMBA,
which the dispatchers read on every call. The first numba call is a warm-up
so compilation is not timed. Each line shows the best-of-N time for both
paths, the speedup and the largest absolute difference between outputs.
"""
import argparse
import os
import time

import numpy as np

from kfpkit import _kernels as K
from kfpkit._accel import HAVE_NUMBA, set_threads


def cases(rng):
    u = rng.standard_normal((256, 512))
    courant = rng.uniform(-0.9, 0.9, 256)  # one Courant number per row
    yield "advect_rows 256x512", lambda: K.advect_rows(u, courant, K.VAN_LEER)

    a = rng.uniform(0.5, 2.0, u.shape)
    yield "diffusion_1v 256x512", lambda: K.diffusion_1v(u, a, 0.01)

    u3 = rng.standard_normal((64, 96, 96))
    a11 = rng.uniform(1.0, 2.0, u3.shape)
    a12 = rng.uniform(-0.3, 0.3, u3.shape)
    a22 = rng.uniform(1.0, 2.0, u3.shape)
    yield "diffusion_2v 64x96x96", lambda: K.diffusion_2v(u3, a11, a12, a22, 0.05, 0.05)

    n_out, n_src = 4096, 4096
    xo, vo = rng.uniform(-4, 4, (n_out, 1)), rng.uniform(-6, 6, (n_out, 1))
    xs, vs = rng.uniform(-4, 4, (n_src, 1)), rng.uniform(-6, 6, (n_src, 1))
    w = rng.uniform(0, 1, n_src)
    eye = np.eye(1)
    images = np.array([[-8.0], [0.0], [8.0]])
    yield "gauss_convolve 4096x4096", lambda: K.gauss_convolve(
        xo, vo, xs, vs, w, 1.0, eye, 12.0 * eye, 0.5 * eye, -2.0, np.array([8.0]), images)

    vals = rng.standard_normal((200_000, 3))
    first = rng.integers(0, vals.shape[0], 2_000_000)
    second = rng.integers(0, vals.shape[0], 2_000_000)
    denom = rng.uniform(0.01, 1.0, first.size)
    yield "pair_max 2e6 pairs", lambda: K.pair_max(vals, first, second, denom)


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def as_array(out):
    return np.asarray(out[0] if isinstance(out, tuple) else out, float)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    args = parser.parse_args()
    if not HAVE_NUMBA:
        print("numba is not importable; nothing to compare")
        return
    threads = set_threads(args.threads)
    print(f"numba threads: {threads}")
    print(f"{'kernel':<28}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max |diff|':>14}")
    rng = np.random.default_rng(0)
    saved = os.environ.get("KFPKIT_NUMBA")
    try:
        for name, fn in cases(rng):
            os.environ["KFPKIT_NUMBA"] = "1"
            fn()  # compile
            t_nb, out_nb = best_time(fn, args.repeat)
            os.environ["KFPKIT_NUMBA"] = "0"
            t_np, out_np = best_time(fn, args.repeat)
            diff = float(np.max(np.abs(as_array(out_nb) - as_array(out_np))))
            print(f"{name:<28}{t_nb:>12.5f}{t_np:>12.5f}{t_np / t_nb:>10.1f}{diff:>14.3g}")
    finally:
        if saved is None:
            os.environ.pop("KFPKIT_NUMBA", None)
        else:
            os.environ["KFPKIT_NUMBA"] = saved


if __name__ == "__main__":
    main()
