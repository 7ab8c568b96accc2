"""Independent reference computations used by the tests.

Nothing here touches the solver internals: paths are rebuilt from the raw
node list, constraints are written out in full (no pruning) and LPs go to
scipy's HiGHS or to brute-force vertex enumeration.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog


class PathLaw:
    """Leaf paths of a process rebuilt from its node list."""

    def __init__(self, P):
        doc = P.to_document()
        by_id = {nd["id"]: nd for nd in doc["nodes"]}
        self.T = doc["horizon"]
        self.leaf_ids = list(P.leaf_ids)
        self.ids, self.values, self.probs = [], [], []
        for lid in self.leaf_ids:
            chain, p = [], 1.0
            nid = lid
            while nid is not None:
                chain.append(by_id[nid])
                p *= by_id[nid]["prob"]
                nid = by_id[nid]["parent"]
            chain.reverse()
            self.ids.append(tuple(nd["id"] for nd in chain))
            self.values.append(np.array([nd["value"] for nd in chain], dtype=float))
            self.probs.append(p)
        self.probs = np.array(self.probs)

    def prefix(self, k: int, t: int) -> tuple:
        return self.ids[k][:t]

    def prefix_prob(self, pre: tuple) -> float:
        return float(sum(p for ids, p in zip(self.ids, self.probs) if ids[:len(pre)] == pre))

    def prefixes(self, t: int) -> list:
        return sorted({ids[:t] for ids in self.ids})


CONSTRAINED = {"plain": [], "causal": [0], "anticausal": [1], "bicausal": [0, 1], "multicausal": None}


def _constrained(mode: str, n: int) -> list:
    c = CONSTRAINED[mode]
    return list(range(n)) if c is None else c


def constraint_system(laws, mode: str):
    """Marginal and causality identities written out over every leaf and prefix tuple."""
    n = len(laws)
    shape = tuple(len(L.leaf_ids) for L in laws)
    tuples = list(itertools.product(*[range(s) for s in shape]))
    rows, rhs = [], []
    for i, L in enumerate(laws):
        for k in range(shape[i]):
            rows.append([1.0 if tup[i] == k else 0.0 for tup in tuples])
            rhs.append(L.probs[k])
    T = laws[0].T
    for i in _constrained(mode, n):
        L = laws[i]
        others = [j for j in range(n) if j != i]
        for t in range(1, T):
            for w in range(shape[i]):
                wt = L.prefix(w, t)
                mw, mwt = L.probs[w], L.prefix_prob(wt)
                for O in itertools.product(*[laws[j].prefixes(t) for j in others]):
                    row = []
                    for tup in tuples:
                        o_ok = all(laws[j].prefix(tup[j], t) == o for j, o in zip(others, O))
                        a = mwt if (o_ok and tup[i] == w) else 0.0
                        b = mw if (o_ok and L.prefix(tup[i], t) == wt) else 0.0
                        row.append(a - b)
                    rows.append(row)
                    rhs.append(0.0)
    return np.array(rows), np.array(rhs), shape


def lp_value(procs, C, mode: str, maximize: bool = False):
    """Optimal value and plan of the constrained leaf-tuple LP via HiGHS."""
    laws = [PathLaw(P) for P in procs]
    A, b, shape = constraint_system(laws, mode)
    c = np.asarray(C, dtype=float).ravel()
    res = linprog(-c if maximize else c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    val = -res.fun if maximize else res.fun
    return float(val), res.x.reshape(shape)


def check_identities(procs, mass, mode: str) -> float:
    """Largest violation of the full causality identity set."""
    laws = [PathLaw(P) for P in procs]
    A, b, _ = constraint_system(laws, mode)
    n_marg = sum(len(L.leaf_ids) for L in laws)
    r = A[n_marg:] @ np.asarray(mass).ravel() if A.shape[0] > n_marg else np.zeros(1)
    return float(np.abs(r).max(initial=0.0))


def vertex_lp(c, A, b):
    """Minimum over basic feasible solutions by brute force; None when infeasible."""
    A, b, c = np.asarray(A, float), np.asarray(b, float), np.asarray(c, float)
    m, n = A.shape
    r = np.linalg.matrix_rank(A)
    # keep a maximal independent row set
    keep = []
    for i in range(m):
        if np.linalg.matrix_rank(A[keep + [i]]) > len(keep):
            keep.append(i)
    A2, b2 = A[keep], b[keep]
    best = None
    for cols in itertools.combinations(range(n), r):
        B = A2[:, cols]
        if abs(np.linalg.det(B)) < 1e-10:
            continue
        xb = np.linalg.solve(B, b2)
        if (xb < -1e-9).any():
            continue
        x = np.zeros(n)
        x[list(cols)] = xb
        if np.abs(A @ x - b).max() > 1e-7:
            continue
        v = float(c @ x)
        if best is None or v < best:
            best = v
    return best


def vertex_transport(p, q, C) -> float:
    m, n = len(p), len(q)
    A = np.zeros((m + n, m * n))
    for a in range(m):
        A[a, a * n:(a + 1) * n] = 1
    for k in range(n):
        A[m + k, k::n] = 1
    return vertex_lp(np.asarray(C).ravel(), A, np.concatenate([p, q]))


def dp_value(X, Y, C) -> float:
    """Bicausal value by recursion over id prefixes, one HiGHS transport per prefix pair."""
    LX, LY = PathLaw(X), PathLaw(Y)
    T = LX.T
    C = np.asarray(C, float)
    memo = {}

    def children(L, pre):
        kids = sorted({ids[:len(pre) + 1] for ids in L.ids if ids[:len(pre)] == pre})
        base = L.prefix_prob(pre) if pre else 1.0
        return kids, np.array([L.prefix_prob(k) / base for k in kids])

    def V(px, py):
        if len(px) == T:
            return C[LX.ids.index(px), LY.ids.index(py)]
        key = (px, py)
        if key not in memo:
            kx, wx = children(LX, px)
            ky, wy = children(LY, py)
            W = np.array([[V(a, b) for b in ky] for a in kx])
            memo[key] = transport(wx, wy, W)
        return memo[key]

    return float(V((), ()))


def transport(p, q, C) -> float:
    m, n = len(p), len(q)
    A = np.zeros((m + n, m * n))
    for a in range(m):
        A[a, a * n:(a + 1) * n] = 1
    for k in range(n):
        A[m + k, k::n] = 1
    res = linprog(np.asarray(C).ravel(), A_eq=A, b_eq=np.concatenate([p, q]), bounds=(0, None), method="highs")
    assert res.status == 0
    return float(res.fun)


def path_cost(laws, p: int = 1) -> np.ndarray:
    """Pairwise-summed sum over time of l_p^p distances on leaf tuples."""
    shape = tuple(len(L.leaf_ids) for L in laws)
    out = np.zeros(shape)
    for tup in itertools.product(*[range(s) for s in shape]):
        tot = 0.0
        for a, b in itertools.combinations(range(len(laws)), 2):
            diff = laws[a].values[tup[a]] - laws[b].values[tup[b]]
            tot += float((np.abs(diff) ** p).sum())
        out[tup] = tot
    return out


def barycenter_value(procs, Cs, cand_paths) -> float:
    """Barycenter LP over (nu, pi^1..pi^N) with full causality identities, via HiGHS."""
    laws = [PathLaw(P) for P in procs]
    cand = [np.asarray(a, float).reshape(len(a), -1) for a in cand_paths]
    K, T = len(cand), laws[0].T
    sizes = [len(L.leaf_ids) * K for L in laws]
    off = np.cumsum([K] + sizes)
    nvar = int(off[-1])
    rows, rhs = [], []
    for i, L in enumerate(laws):
        n_i = len(L.leaf_ids)

        def var(x, a, i=i, n_i=n_i):
            return int(off[i] + x * K + a)

        for x in range(n_i):
            r = np.zeros(nvar)
            for a in range(K):
                r[var(x, a)] = 1
            rows.append(r); rhs.append(L.probs[x])
        for a in range(K):
            r = np.zeros(nvar)
            for x in range(n_i):
                r[var(x, a)] = 1
            r[a] = -1
            rows.append(r); rhs.append(0.0)
        for t in range(1, T):
            cpre = sorted({tuple(c[:t].ravel()) for c in cand})
            for w in range(n_i):
                wt = L.prefix(w, t)
                mw, mwt = L.probs[w], L.prefix_prob(wt)
                for O in cpre:
                    r = np.zeros(nvar)
                    for x in range(n_i):
                        for a in range(K):
                            if tuple(cand[a][:t].ravel()) != O:
                                continue
                            if x == w:
                                r[var(x, a)] += mwt
                            if L.prefix(x, t) == wt:
                                r[var(x, a)] -= mw
                    rows.append(r); rhs.append(0.0)
    r = np.zeros(nvar)
    r[:K] = 1
    rows.append(r); rhs.append(1.0)
    c = np.concatenate([np.zeros(K)] + [np.asarray(C, float).ravel() for C in Cs])
    res = linprog(c, A_eq=np.array(rows), b_eq=np.array(rhs), bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)
