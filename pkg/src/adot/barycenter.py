"""Causal barycenters on a fixed candidate path set, and a bicausal candidate search."""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .bicausal_dp import value_process
from .causal_solver import causal_rows
from .costs import cost_tensor
from .coupling import Coupling, check_horizons
from .errors import DualVerificationFailed, EmptySupport, Infeasible, MalformedInput, NumericalFailure
from .lp import LinearProgram, solve_lp
from .potentials import DualPotential, doob_pieces, lift_piece

FEAS_TOL = 1e-7
CONGRUENCY_TOL = 1e-8


class CandidateSupport:
    """Finite set of candidate paths, organised as a prefix tree (no probabilities).

    Paths are stored in lexicographic order so that every prefix owns a
    contiguous block of candidates.
    """

    def __init__(self, paths: Sequence, ids: Sequence[str] | None = None):
        if len(paths) == 0:
            raise EmptySupport("candidate support is empty")
        vals = [np.asarray(p, dtype=float) for p in paths]
        vals = [v.reshape(v.shape[0], -1) for v in vals]
        T, d = vals[0].shape
        if any(v.shape != (T, d) for v in vals):
            raise MalformedInput("candidate paths must share horizon and dimension")
        ids = list(ids) if ids is not None else [f"a{k}" for k in range(len(vals))]
        if len(set(ids)) != len(ids):
            raise MalformedInput("candidate ids must be unique")
        keys = [tuple(np.round(v.ravel() / 1e-9).astype(np.int64).tolist()) for v in vals]
        if len(set(keys)) != len(keys):
            raise MalformedInput("candidate paths must be distinct")
        order = sorted(range(len(vals)), key=lambda k: keys[k])
        self.horizon, self.dimension = T, d
        self.leaf_ids = [ids[k] for k in order]
        self.leaf_values = np.stack([vals[k] for k in order])
        self._keys = [keys[k] for k in order]
        self._prefix_index = []
        self._prefix_ids = []
        for t in range(1, T + 1):
            seen: dict[tuple, int] = {}
            idx = []
            for key in self._keys:
                pre = key[: t * d]
                idx.append(seen.setdefault(pre, len(seen)))
            self._prefix_index.append(np.array(idx, dtype=np.intp))
            if t == T:
                self._prefix_ids.append(list(self.leaf_ids))
            else:
                first = {}
                for k, j in enumerate(idx):
                    first.setdefault(j, k)
                self._prefix_ids.append([f"{self.leaf_ids[first[j]]}[:{t}]" for j in range(len(seen))])

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_ids)

    def n_nodes(self, t: int) -> int:
        return len(self._prefix_ids[t - 1])

    def node_ids(self, t: int) -> list[str]:
        return list(self._prefix_ids[t - 1])

    def ancestors(self, t: int, s: int) -> np.ndarray:
        """Map depth-``t`` prefixes to their depth-``s`` prefix."""
        leaf_t = self._prefix_index[t - 1]
        out = np.empty(self.n_nodes(t), dtype=np.intp)
        out[leaf_t] = self._prefix_index[s - 1]
        return out

    def to_document(self) -> dict:
        return {"paths": [{"id": i, "values": v.tolist()} for i, v in zip(self.leaf_ids, self.leaf_values)]}


def load_candidates(document) -> CandidateSupport:
    if isinstance(document, (str, bytes, bytearray)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"candidate file is not valid JSON: {exc}") from exc
    if not isinstance(document, Mapping) or not isinstance(document.get("paths"), list):
        raise MalformedInput("candidate document needs a 'paths' list")
    ids, vals = [], []
    for k, p in enumerate(document["paths"]):
        if not isinstance(p, Mapping) or "id" not in p or "values" not in p:
            raise MalformedInput(f"candidate #{k} needs 'id' and 'values'")
        ids.append(str(p["id"]))
        vals.append(p["values"])
    try:
        return CandidateSupport(vals, ids)
    except ValueError as exc:
        raise MalformedInput(f"bad candidate values: {exc}") from exc


@dataclass
class BarycenterDual:
    marginals: list
    support: CandidateSupport
    f: list          # per marginal: potentials on time-1 nodes
    g: list          # per marginal: potentials on candidates
    M: list          # per marginal: {s: (own node_s, candidate prefix_{s-1})}

    def potential(self, i: int) -> DualPotential:
        return DualPotential("causal", [self.marginals[i], self.support], [self.f[i], None],
                             [self.M[i], {}], [None, self.g[i]])

    @property
    def value(self) -> float:
        return float(sum(P.probs(1) @ f for P, f in zip(self.marginals, self.f)))

    def to_document(self) -> dict:
        out = []
        for i, P in enumerate(self.marginals):
            doc = self.potential(i).to_document()
            out.append({"f": doc["initial"][0], "g": doc["terminal"][1], "compensators": doc["compensators"][0]})
        return {"value": self.value, "marginals": out}


@dataclass
class BarycenterResult:
    nu: np.ndarray
    value: float
    couplings: list
    dual: BarycenterDual
    support: CandidateSupport
    lp_iterations: int = 0

    def nu_table(self) -> dict:
        return dict(zip(self.support.leaf_ids, self.nu.tolist()))


def causal_barycenter(marginals: Sequence, costs: Sequence, A: CandidateSupport) -> BarycenterResult:
    """Causal barycenter over probability laws on the candidate paths, with its congruent dual."""
    procs = list(marginals)
    if A.n_leaves == 0:
        raise EmptySupport("candidate support is empty")
    check_horizons(procs + [A])
    n, K = len(procs), A.n_leaves
    C = [cost_tensor(c, [P, A]) for c, P in zip(costs, procs)]
    offsets = np.cumsum([K] + [P.n_leaves * K for P in procs])
    nvar = int(offsets[-1])
    rows, rhs, meta = [], [], []

    def put(block_row, i):
        full = np.zeros(nvar)
        full[offsets[i]:offsets[i + 1]] = block_row
        return full

    for i, P in enumerate(procs):
        for x in range(P.n_leaves):
            blk = np.zeros((P.n_leaves, K))
            blk[x] = 1.0
            rows.append(put(blk.ravel(), i)); rhs.append(P.leaf_probs[x]); meta.append(("mu", i, x))
        for a in range(K):
            blk = np.zeros((P.n_leaves, K))
            blk[:, a] = 1.0
            row = put(blk.ravel(), i)
            row[a] = -1.0
            rows.append(row); rhs.append(0.0); meta.append(("link", i, a))
        crow, cmeta = causal_rows([P, A], 0, (P.n_leaves, K))
        for r, m in zip(crow, cmeta):
            rows.append(put(r, i)); rhs.append(0.0); meta.append(("causal", i) + m[2:])
    row = np.zeros(nvar)
    row[:K] = 1.0
    rows.append(row); rhs.append(1.0); meta.append(("nu",))
    cvec = np.concatenate([np.zeros(K)] + [c.ravel() for c in C])
    sol = solve_lp(LinearProgram(cvec, np.array(rows), np.array(rhs)))
    if sol.status == "infeasible":
        raise Infeasible("barycenter LP is infeasible")
    if not sol.optimal:
        raise NumericalFailure(f"barycenter LP returned status {sol.status}")

    x = sol.x
    nu = np.maximum(x[:K], 0.0)
    couplings = [Coupling([P, A], np.maximum(x[offsets[i]:offsets[i + 1]].reshape(P.n_leaves, K), 0.0))
                 for i, P in enumerate(procs)]

    h = [np.zeros(P.n_leaves) for P in procs]
    g = [np.zeros(K) for _ in procs]
    lam = {}
    lam_total = 0.0
    for val, m in zip(sol.y, meta):
        if m[0] == "mu":
            h[m[1]][m[2]] = val
        elif m[0] == "link":
            g[m[1]][m[2]] = val
        elif m[0] == "nu":
            lam_total = val
        else:
            _, i, t, w, O = m
            key = (i, t)
            if key not in lam:
                lam[key] = np.zeros((procs[i].n_leaves, A.n_nodes(t)))
            lam[key][w, O[0]] = val

    f, M = [], []
    T = A.horizon
    for i, P in enumerate(procs):
        f1, pieces = doob_pieces(P, h[i], 1)
        comp = {s: lift_piece(p, [A], s, None) for s, p in pieces.items()}
        for t in range(1, T):
            if (i, t) in lam:
                for s, p in doob_pieces(P, lam[(i, t)], t)[1].items():
                    comp[s] = comp[s] + lift_piece(p, [A], s, t)
        f.append(f1 + lam_total / n)
        M.append(comp)
    # congruent gauge: sum_i g^i = 0 while keeping every constraint
    excess = np.maximum(sum(g) - lam_total, 0.0)
    g = [gi - (excess + lam_total) / n for gi in g]
    dual = BarycenterDual(procs, A, f, g, M)
    for i in range(n):
        dual.potential(i).recenter()
    rep = verify_barycenter_dual(dual, procs, costs, A, primal=float(sol.value))
    if not rep["ok"]:
        raise DualVerificationFailed(f"barycenter dual failed verification: {rep}")
    return BarycenterResult(nu, float(sol.value), couplings, dual, A, sol.iterations)


def verify_barycenter_dual(dual: BarycenterDual, marginals: Sequence, costs: Sequence,
                           A: CandidateSupport, primal: float | None = None) -> dict:
    """Congruency, pointwise feasibility, compensator means and (optionally) the value identity."""
    n = len(marginals)
    total = sum(dual.g)
    k = int(np.argmax(np.abs(total)))
    congruency = float(abs(total[k]))
    excess, witness = -np.inf, None
    mean = 0.0
    for i, P in enumerate(marginals):
        pot = dual.potential(i)
        diff = pot.s_tensor() - cost_tensor(costs[i], [P, A])
        pos = np.unravel_index(int(np.argmax(diff)), diff.shape)
        if diff[pos] > excess:
            excess = float(diff[pos])
            witness = (i, P.leaf_ids[pos[0]], A.leaf_ids[pos[1]])
        mean = max(mean, pot.max_compensator_mean())
    report = {"congruency": congruency, "congruency_witness": A.leaf_ids[k],
              "max_excess": excess, "excess_witness": witness,
              "max_compensator_mean": mean, "value": dual.value}
    ok = congruency <= CONGRUENCY_TOL and excess <= FEAS_TOL and mean <= 1e-9
    if primal is not None:
        report["duality_gap"] = abs(dual.value - primal)
        ok = ok and report["duality_gap"] <= FEAS_TOL
    report["ok"] = bool(ok) and n > 0
    return report


def bicausal_barycenter_search(marginals: Sequence, costs: Sequence, candidates: Sequence,
                               threads: int | None = None) -> dict:
    """Evaluate ``sum_i AW_{c^i}(mu^i, candidate)`` for each candidate tree; first minimizer wins."""
    if not candidates:
        raise EmptySupport("no candidate processes given")
    values = []
    for cand in candidates:
        values.append(float(sum(value_process(P, cand, c, threads).V0 for P, c in zip(marginals, costs))))
    best = int(np.argmin(values))
    return {"best_index": best, "best": candidates[best], "value": values[best], "values": values}
