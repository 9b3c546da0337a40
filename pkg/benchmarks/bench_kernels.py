"""Time the compiled and numpy kernel backends on the same inputs.

    python3 benchmarks/bench_kernels.py --size 1024x512 --classes 19 --repeat 3
"""
import argparse
import time

import numpy as np

from segdepth import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", default="1024x512", help="WxH")
    ap.add_argument("--classes", type=int, default=19)
    ap.add_argument("--images", type=int, default=3, help="images per composite")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    w, h = (int(v) for v in args.size.lower().split("x"))
    c, n = args.classes, args.images
    rng = np.random.default_rng(args.seed)

    dep = rng.normal(0, 3, (h, w, c)).astype(np.float32)
    uda = rng.normal(0, 3, (h, w, c)).astype(np.float32)
    w_uda = rng.uniform(0.02, 1.0, c)
    w_dep = 1.0 - w_uda

    images = rng.integers(0, 256, (n, h, w, 3), dtype=np.uint8)
    labels = rng.integers(0, c, (n, h, w), dtype=np.uint8)
    depths = rng.uniform(1, 100, (n, h, w))
    valid = rng.random((n, h, w)) < 0.9
    thresholds = np.quantile(depths, 0.8, axis=(1, 2))
    things = (rng.random(256) < 0.5).astype(np.uint8)

    cases = {
        "fuse_scores": lambda b: kernels.fuse_scores(dep, uda, w_dep, w_uda, 6.0, backend=b),
        "fuse_labels": lambda b: kernels.fuse_labels(dep, uda, w_dep, w_uda, 6.0, backend=b),
        "composite": lambda b: kernels.composite(images, labels, depths, valid, thresholds,
                                                 things, backend=b)[1],
    }
    backends = sorted(kernels.BACKENDS)
    print(f"{w}x{h}, {c} classes, {n} composite images; backends: {', '.join(backends)}")
    print(f"{'kernel':<12}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}  max diff")
    for name, fn in cases.items():
        times, outs = {}, {}
        for b in backends:
            times[b], outs[b] = best_of(lambda: fn(b), args.repeat)
        row = f"{name:<12}" + "".join(f"{times[b]:>11.3f}s" for b in backends)
        if len(backends) == 2:
            diff = np.abs(outs["cython"].astype(float) - outs["numpy"].astype(float)).max()
            row += f"{times['numpy'] / times['cython']:>9.2f}x  {diff:.1e}"
        print(row)


if __name__ == "__main__":
    main()
