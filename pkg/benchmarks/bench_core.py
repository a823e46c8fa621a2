"""Compare the compiled core with the pure-Python fallback.

Run ``python3 benchmarks/bench_core.py [--n 300] [--p 4] [--repeat 3]``.
"""

import argparse
import time

import numpy as np

from msgp import _backend
from msgp.kernels import KernelSpec, PairSet, calibrate_cutoff
from msgp.sparse import fill_reducing_ordering, inverse_permutation


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workload(core, X, spec, tau, cutoff, perm):
    n = X.shape[0]
    ptr, rows, diffs = core.candidate_pairs(X, cutoff)
    Lp_, Li_, Lx_ = core.assemble_lower(n, ptr, rows, diffs, tau, spec.code, spec.params,
                                        spec.nugget)
    pinv = inverse_permutation(perm)
    Cp, Ci, Cx = core.symperm_upper(n, Lp_, Li_, Lx_, pinv)
    parent = core.etree(n, Cp, Ci)
    Lp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(core.col_counts(n, Cp, Ci, parent), out=Lp[1:])
    Li, Lx, status = core.chol_numeric(n, Cp, Ci, Cx, parent, Lp)
    B = np.ones((n, 4))
    core.lsolve(n, Lp, Li, Lx, B)
    core.ltsolve(n, Lp, Li, Lx, B)
    core.dense_corr(X, tau, 3, spec.params, 1e-8)
    return status


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--p", type=int, default=4)
    ap.add_argument("--omega", type=float, default=0.9)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    X = rng.uniform(-1.0, 1.0, (args.n, args.p))
    spec = KernelSpec("bohman", omega=args.omega)
    c = calibrate_cutoff(X, args.omega)
    tau = np.full(args.p, c / args.p)
    pairs = PairSet.build(X, c)
    perm = fill_reducing_ordering(pairs.pattern(), "mindegree")
    backends = {"python": _backend._pycore}
    if _backend.COMPILED:
        backends["compiled"] = _backend.core
    else:
        print("compiled extension unavailable; timing the fallback only")
    times = {}
    for name, core in backends.items():
        times[name] = _time(lambda: workload(core, X, spec, tau, c, perm), args.repeat)
        print(f"{name:>9s}: {times[name] * 1e3:9.2f} ms  (n={args.n}, p={args.p}, "
              f"omega={args.omega}, {pairs.size} pairs)")
    if len(times) == 2:
        print(f"  speedup: {times['python'] / times['compiled']:.1f}x")


if __name__ == "__main__":
    main()
