"""Compare the compiled pivot kernel with the NumPy fallback.

    python3 benchmarks/bench_simplex.py --repeat 3
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from adot.causal_solver import causal_rows, marginal_rows
from adot.costs import CostFunction, cost_tensor
from adot.instances import random_tree
from adot.lp import LinearProgram, solve_lp


def random_lps(rng, count, m, n):
    out = []
    for _ in range(count):
        A = rng.normal(size=(m, n))
        out.append(LinearProgram(rng.normal(size=n) + 1.0, A, A @ rng.random(n)))
    return out


def bicausal_lps(rng, count, T):
    out = []
    for _ in range(count):
        X, Y = random_tree(rng, T, 3, prefix="x"), random_tree(rng, T, 3, prefix="y")
        C = cost_tensor(CostFunction.lp_sum(1), [X, Y])
        rows, rhs, _ = marginal_rows([X, Y], C.shape)
        for i in (0, 1):
            r, _ = causal_rows([X, Y], i, C.shape)
            rows += r
            rhs += [0.0] * len(r)
        out.append(LinearProgram(C.ravel(), np.array(rows), np.array(rhs)))
    return out


def bench(lps, backend, repeat):
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        values = [solve_lp(lp, backend=backend).value for lp in lps]
        best = min(best, time.perf_counter() - start)
    return best, values


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    suites = {
        "dense 20x40": random_lps(rng, 50, 20, 40),
        "dense 60x120": random_lps(rng, 10, 60, 120),
        "bicausal T=3": bicausal_lps(rng, 10, 3),
    }
    print(f"{'suite':<16}{'python [s]':>12}{'compiled [s]':>14}{'speedup':>10}{'max |dv|':>12}")
    for name, lps in suites.items():
        tp, vp = bench(lps, "python", args.repeat)
        tc, vc = bench(lps, "compiled", args.repeat)
        diff = max(abs(a - b) for a, b in zip(vp, vc))
        print(f"{name:<16}{tp:>12.3f}{tc:>14.3f}{tp / tc:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
