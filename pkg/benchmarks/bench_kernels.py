"""Time the numba kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs once per backend to warm up (this triggers JIT compilation),
then ``--repeat`` timed runs; the best time is reported together with the
largest relative disagreement between the two backends.
"""

import argparse
import json
import time

import numpy as np

from nonlocalma import kernels


def _cases(rng):
    b = np.geomspace(1e-3, 1e3, 20000)
    w = rng.uniform(0.5, 1.5, b.size)
    A = rng.standard_normal(b.size)
    B = rng.standard_normal(b.size)
    v1, v2 = rng.standard_normal(200000), rng.standard_normal(200000)
    d = rng.uniform(1e-3, 10.0, 200000)
    mats = rng.standard_normal((200000, 3, 3))
    return {
        "angular_g0": lambda be: kernels.angular_g0(2.0, b, 3.4, backend=be),
        "angular_d2": lambda be: kernels.angular_d2(2.0, b, 3.4, backend=be),
        "radial_kernel_sum": lambda be: kernels.radial_kernel_sum(2.0, b, w, A, B, 3.4, backend=be),
        "pair_ratio_max": lambda be: kernels.pair_ratio_max(v1, v2, d, 0.5, backend=be)[0],
        "cofactor_batch": lambda be: kernels.cofactor_batch(mats, backend=be),
    }


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def _rel_diff(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    scale = max(float(np.max(np.abs(y))), 1e-300)
    return float(np.max(np.abs(x - y)) / scale)


def run(repeat=5, seed=0):
    rows = []
    for name, fn in _cases(np.random.default_rng(seed)).items():
        t_np, out_np = _best(lambda: fn("numpy"), repeat)
        t_nb, out_nb = _best(lambda: fn("numba"), repeat)
        rows.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb, "speedup": t_np / t_nb,
                     "max_rel_diff": _rel_diff(out_nb, out_np)})
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", default=None, help="also write the rows to this file")
    args = ap.parse_args()
    rows = run(args.repeat, args.seed)
    print(f"{'kernel':<20}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'rel diff':>12}")
    for r in rows:
        print(f"{r['kernel']:<20}{r['numpy_s']:>12.4f}{r['numba_s']:>12.4f}{r['speedup']:>10.1f}{r['max_rel_diff']:>12.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
