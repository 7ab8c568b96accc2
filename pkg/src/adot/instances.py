"""Seeded random scenario trees and couplings for tests, benchmarks and ``selftest``."""

from __future__ import annotations

import numpy as np

from .coupling import Coupling
from .process import FilteredProcess, Node


def random_tree(rng: np.random.Generator, T: int, max_children: int = 3, d: int = 1,
                low: int = -2, high: int = 2, prefix: str = "n") -> FilteredProcess:
    """Tree with small integer values, so equal-valued siblings do occur."""
    nodes: list[Node] = []
    counter = iter(range(10 ** 9))

    def grow(parent, t):
        k = int(rng.integers(1, max_children + 1))
        w = rng.integers(1, 5, size=k).astype(float)
        w /= w.sum()
        for p in w:
            nid = f"{prefix}{next(counter)}"
            value = tuple(float(v) for v in rng.integers(low, high + 1, size=d))
            nodes.append(Node(nid, t, value, float(p), parent))
            if t < T:
                grow(nid, t + 1)

    grow(None, 1)
    return FilteredProcess(nodes, horizon=T, dimension=d)


def binomial_martingale(rng: np.random.Generator, T: int, x0: float = 0.0,
                        prefix: str = "b") -> FilteredProcess:
    """Binomial tree with random integer up/down moves and martingale probabilities.

    The time-1 layer is itself a binomial step from ``x0``.
    """
    nodes: list[Node] = []
    counter = iter(range(10 ** 9))

    def grow(parent, x, t):
        up, down = (float(v) for v in rng.integers(1, 4, size=2))
        pu = down / (up + down)
        for val, p in ((x + up, pu), (x - down, 1.0 - pu)):
            nid = f"{prefix}{next(counter)}"
            nodes.append(Node(nid, t, (val,), p, parent))
            if t < T:
                grow(nid, val, t + 1)

    grow(None, x0, 1)
    return FilteredProcess(nodes, horizon=T, dimension=1)


def quantile_coupling(weights: list[np.ndarray], orders: list[np.ndarray] | None = None) -> np.ndarray:
    """Comonotone (north-west corner) coupling of several discrete laws.

    ``orders[i]`` permutes the atoms of law ``i`` before matching quantiles.
    """
    n = len(weights)
    orders = orders or [np.arange(len(w)) for w in weights]
    out = np.zeros(tuple(len(w) for w in weights))
    cums = [np.cumsum(w[o]) for w, o in zip(weights, orders)]
    cuts = np.unique(np.concatenate([[0.0]] + cums))
    cuts = cuts[cuts <= 1.0 + 1e-12]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (lo + hi)
        pos = tuple(int(orders[i][min(np.searchsorted(cums[i], mid), len(cums[i]) - 1)]) for i in range(n))
        out[pos] += hi - lo
    return out


def _product(weights):
    out = np.ones(())
    for w in weights:
        out = np.multiply.outer(out, w)
    return out


def random_step_coupling(rng: np.random.Generator, weights: list[np.ndarray]) -> np.ndarray:
    """Random mixture of the product law and a permuted comonotone coupling."""
    lam = float(rng.choice([0.0, 1.0, rng.random()]))
    orders = [rng.permutation(len(w)) for w in weights]
    return lam * _product(weights) + (1 - lam) * quantile_coupling(weights, orders)


def random_glued_coupling(rng: np.random.Generator, procs) -> Coupling:
    """Glue random one-step couplings of the kernels; multicausal (bicausal for two trees)."""
    procs = list(procs)
    T = procs[0].horizon
    mass = random_step_coupling(rng, [P.cond_probs(1) for P in procs])
    for t in range(2, T + 1):
        nxt = np.zeros(tuple(P.n_nodes(t) for P in procs))
        for pos in np.argwhere(mass > 0):
            ranges = [P.children(t - 1, k) for P, k in zip(procs, pos)]
            step = random_step_coupling(rng, [P.cond_probs(t)[r.start:r.stop] for P, r in zip(procs, ranges)])
            nxt[tuple(slice(r.start, r.stop) for r in ranges)] = mass[tuple(pos)] * step
        mass = nxt
    return Coupling(procs, mass)


def random_plain_coupling(rng: np.random.Generator, procs) -> Coupling:
    """Random coupling of the leaf laws that ignores the filtrations."""
    procs = list(procs)
    return Coupling(procs, random_step_coupling(rng, [P.leaf_probs for P in procs]))
