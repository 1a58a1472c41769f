"""Compiled vs numpy stereo kernels on a rendered frame.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--size 480x270]

Checks that both backends agree bit for bit before timing them.
"""
import argparse
import timeit

import numpy as np

from polwater.kernels import _fallback
from polwater.stereo import PATHS_4, to_gray
from polwater.synth import CameraSpec, Puddle, SceneSpec, render

try:
    from polwater.kernels import _sgm
except ImportError:
    _sgm = None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--size", default="480x270")
    ap.add_argument("--max-disparity", type=int, default=32)
    args = ap.parse_args()
    w, h = map(int, args.size.split("x"))
    sf = render(SceneSpec(camera=CameraSpec(width=w, height=h),
                          puddles=(Puddle(x=0.5, z=8.0, semi_x=1.5, semi_z=2.0),)))
    left = np.ascontiguousarray(to_gray(sf.frame.left))
    right = np.ascontiguousarray(to_gray(sf.frame.right))
    backends = {"numpy": _fallback}
    if _sgm is not None:
        backends["cython"] = _sgm
    else:
        print("compiled extension not built; timing the numpy fallback only")

    dirs = PATHS_4
    results, times = {}, {}
    for name, mod in backends.items():
        cl, cr = mod.census_transform(left, 2), mod.census_transform(right, 2)
        cost = mod.hamming_cost_volume(cl, cr, args.max_disparity, 24)
        agg = mod.aggregate_paths(cost, 10, 120, dirs)
        results[name] = (cl, cost, agg)
        times[name] = {
            "census": min(timeit.repeat(lambda: mod.census_transform(left, 2), number=1, repeat=args.repeat)),
            "cost": min(timeit.repeat(lambda: mod.hamming_cost_volume(cl, cr, args.max_disparity, 24),
                                      number=1, repeat=args.repeat)),
            "aggregate": min(timeit.repeat(lambda: mod.aggregate_paths(cost, 10, 120, dirs),
                                           number=1, repeat=args.repeat)),
        }
    if len(results) == 2:
        for a, b, label in zip(results["numpy"], results["cython"], ("census", "cost", "aggregate")):
            assert np.array_equal(np.asarray(a), np.asarray(b)), f"{label} differs between backends"
        print("backends agree on census, cost volume and aggregation")

    print(f"{w}x{h}, {args.max_disparity} disparities, best of {args.repeat}")
    print(f"{'kernel':<10}" + "".join(f"{n:>12}" for n in backends) + ("     speedup" if len(backends) == 2 else ""))
    for k in ("census", "cost", "aggregate"):
        row = f"{k:<10}" + "".join(f"{times[n][k] * 1e3:>10.1f}ms" for n in backends)
        if len(backends) == 2:
            row += f"{times['numpy'][k] / times['cython'][k]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
