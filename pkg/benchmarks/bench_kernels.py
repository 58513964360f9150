"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--height 400] [--side 500] [--interval 45]
"""
import argparse
import math
import time

import numpy as np

from omnisal import _core
from omnisal.geometry import view_grid


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--height", type=int, default=400)
    ap.add_argument("--side", type=int, default=500)
    ap.add_argument("--interval", type=float, default=45.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    h, w = args.height, 2 * args.height
    rng = np.random.default_rng(0)
    img = rng.random((h, w))
    grid = view_grid(args.interval, math.radians(100))
    axes = np.stack([f.axes for f in grid])
    tan_half = np.array([f.tan_half for f in grid])
    views = rng.random((len(grid), args.side, args.side))
    xs = rng.uniform(0, w, 10 ** 6)
    ys = rng.uniform(0, h, 10 ** 6)

    impls = {"python": _core.python_kernels}
    if _core.compiled_kernels is not None:
        impls["cython"] = _core.compiled_kernels
    else:
        print("compiled extension not available; timing the fallback only")

    cases = {
        "bilinear_sample (1e6 points)": lambda k: k.bilinear_sample(img, xs, ys, True),
        f"extract_view x{len(grid)} ({args.side}px)": lambda k: [
            k.extract_view(img, axes[i], tan_half[i], args.side) for i in range(len(grid))],
        f"integrate_views ({h}x{w}, {len(grid)} views)": lambda k: k.integrate_views(
            views, axes, tan_half, h, w, False),
    }
    print(f"{'kernel':44s}" + "".join(f"{n:>12s}" for n in impls) + "     speedup")
    for label, fn in cases.items():
        t = {n: best_of(lambda: fn(k), args.repeat) for n, k in impls.items()}
        row = f"{label:44s}" + "".join(f"{t[n]:11.3f}s" for n in impls)
        if "cython" in t:
            row += f"{t['python'] / t['cython']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
