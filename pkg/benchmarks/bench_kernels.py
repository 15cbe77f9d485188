"""Compiled vs pure-Python kernels on identical inputs.

    python3 benchmarks/bench_kernels.py [--arrivals N] [--repeat R]
"""
import argparse
import time

import numpy as np

from bwplanner import _backend
from bwplanner import simulator as S
from bwplanner.distributions import Exponential


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--arrivals", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--series", type=int, default=4000, help="length of the coefficient recursion")
    args = ap.parse_args()

    try:
        compiled = _backend.kernels("cython")
    except ImportError:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    python = _backend.kernels("python")

    cfg = S.SystemConfig(
        Exponential(2.4), (0.2, 0.3, 0.5), 1.0, 3, quotas_class=(5, 5, 5), quotas_cum=(5, 10, 15),
        horizon=args.arrivals, seed=1, record=True,
    )
    inputs = S.build_inputs(cfg)
    r = np.zeros(args.series + 1)
    r[::2] = 0.3 * 0.7 ** np.arange(len(r[::2]))

    rows = []
    for label, fn_c, fn_p in (
        (
            f"simulate {args.arrivals} arrivals, 3 classes",
            lambda: S._simulate(cfg, *inputs, warmup=cfg.warmup(), backend="cython"),
            lambda: S._simulate(cfg, *inputs, warmup=cfg.warmup(), backend="python"),
        ),
        (
            f"coefficient recursion, {args.series} terms",
            lambda: compiled.takacs_f(r, 2, args.series),
            lambda: python.takacs_f(r, 2, args.series),
        ),
    ):
        tc, oc = best_of(fn_c, args.repeat)
        tp, op = best_of(fn_p, max(1, args.repeat - 2))
        if isinstance(oc, dict):
            same = all(np.array_equal(np.asarray(oc[k]), np.asarray(op[k])) for k in oc)
        else:
            same = np.array_equal(oc, op)
        rows.append((label, tc, tp, tp / tc, same))

    w = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{w}}  {'compiled s':>10}  {'python s':>9}  {'speedup':>7}  identical")
    for label, tc, tp, sp, same in rows:
        print(f"{label:<{w}}  {tc:10.4f}  {tp:9.4f}  {sp:7.1f}  {same}")


if __name__ == "__main__":
    main()
