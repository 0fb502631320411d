"""Time the oracle kernels: compiled extension against the NumPy fallback.

    python benchmarks/bench_oracle.py [--k 20] [--repeat 5]
"""
import argparse
import time

import numpy as np

from delayed_impact import _kernels_py
from delayed_impact.fixtures import three_score_problem
from delayed_impact.oracle import OracleConfig, oracle_solve, random_problem

try:
    from delayed_impact import _kernels as compiled
except ImportError:
    compiled = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = {"python": _kernels_py}
    if compiled is not None:
        backends["compiled"] = compiled
    else:
        print("compiled kernels not built; timing the NumPy fallback only")

    rng = np.random.default_rng(0)
    a, b = rng.random(4), rng.normal(size=4)
    n = (args.k + 1) ** 4
    print(f"policy_values, C=4, k={args.k} ({n} policies per group)")
    for name, ker in backends.items():
        t = best_of(lambda: ker.policy_values(a, b, args.k), args.repeat)
        print(f"  {name:9s} {t * 1e3:9.2f} ms")

    ra, va = _kernels_py.policy_values(rng.random(4), rng.normal(size=4), args.k)
    rb, vb = _kernels_py.policy_values(rng.random(4), rng.normal(size=4), args.k)
    print("best_pair on the same grids")
    for name, ker in backends.items():
        t = best_of(lambda: ker.best_pair(ra, va, rb, vb, 0.4, 0.6, 1e-4), args.repeat)
        print(f"  {name:9s} {t * 1e3:9.2f} ms")

    problems = [three_score_problem()] + [random_problem(rng, C=4) for _ in range(4)]
    print(f"oracle_solve, 5 instances x 3 criteria, k={args.k}")
    for name in backends:
        cfg = OracleConfig(k=args.k, backend=name)

        def run():
            for p in problems:
                for crit in ("maxutil", "demparity", "eqopt"):
                    oracle_solve(p.groups, p.utility, crit, cfg)
        t = best_of(run, args.repeat)
        print(f"  {name:9s} {t * 1e3:9.2f} ms")


if __name__ == "__main__":
    main()
