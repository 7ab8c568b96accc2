"""Joint laws of several scenario trees and their (multi)causality checks."""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .costs import CostFunction, cost_tensor
from .errors import HorizonMismatch, MalformedInput, MarginalMismatch, OutOfRange
from .process import FilteredProcess

CHECK_TOL = 1e-8
MODES = ("plain", "causal", "anticausal", "bicausal", "multicausal")


@dataclass(frozen=True)
class CouplingReport:
    ok: bool
    mode: str
    worst_violation: float
    witness: str | None = None

    def to_dict(self) -> dict:
        return {"ok": self.ok, "mode": self.mode, "worst_violation": self.worst_violation,
                "witness": self.witness}


def aggregate(arr: np.ndarray, axis: int, P: FilteredProcess, t: int) -> np.ndarray:
    """Sum a leaf-indexed axis of ``arr`` into depth-``t`` prefixes of ``P``."""
    if t == P.horizon:
        return arr
    anc = P.ancestors(P.horizon, t)
    starts = np.flatnonzero(np.r_[True, anc[1:] != anc[:-1]])
    return np.add.reduceat(arr, starts, axis=axis)


def node_marginal(arr: np.ndarray, procs: Sequence[FilteredProcess], depths: Sequence[int]) -> np.ndarray:
    """Aggregate every axis ``i`` of a leaf-tuple array to depth ``depths[i]``."""
    out = arr
    for i, (P, t) in enumerate(zip(procs, depths)):
        out = aggregate(out, i, P, t)
    return out


class Coupling:
    """Probability on tuples of leaf paths, stored densely by leaf position."""

    def __init__(self, marginals: Sequence[FilteredProcess], mass):
        self.marginals = list(marginals)
        shape = tuple(P.n_leaves for P in self.marginals)
        if isinstance(mass, Mapping):
            arr = np.zeros(shape)
            index = [{lid: k for k, lid in enumerate(P.leaf_ids)} for P in self.marginals]
            for key, p in mass.items():
                if len(key) != len(shape):
                    raise MalformedInput(f"mass key {key} has wrong length")
                try:
                    pos = tuple(index[i][lid] for i, lid in enumerate(key))
                except KeyError as exc:
                    raise MalformedInput(f"unknown leaf id {exc.args[0]!r} in coupling") from None
                arr[pos] += float(p)
        else:
            arr = np.array(mass, dtype=float)
            if arr.shape != shape:
                raise MalformedInput(f"mass array has shape {arr.shape}, expected {shape}")
        if (arr < -1e-12).any() or not np.isfinite(arr).all():
            raise MalformedInput("coupling masses must be finite and non-negative")
        arr[arr < 0] = 0.0
        self.dense = arr

    @property
    def n(self) -> int:
        return len(self.marginals)

    def support(self, tol: float = 0.0) -> np.ndarray:
        """Leaf-index tuples (rows) carrying mass above ``tol``."""
        return np.argwhere(self.dense > tol)

    @property
    def mass(self) -> dict[tuple[str, ...], float]:
        ids = [P.leaf_ids for P in self.marginals]
        return {tuple(ids[i][k] for i, k in enumerate(row)): float(self.dense[tuple(row)])
                for row in self.support()}

    def node_mass(self, t: int) -> np.ndarray:
        """Joint law of the depth-``t`` prefixes, shape ``(n^1_t, ..., n^N_t)``."""
        return node_marginal(self.dense, self.marginals, [t] * self.n)

    def to_document(self, refs: Sequence[str] | None = None) -> dict:
        refs = list(refs) if refs is not None else [f"marginal{i}" for i in range(self.n)]
        return {"marginals": refs,
                "mass": [{"paths": list(k), "p": v} for k, v in self.mass.items()]}

    def __repr__(self) -> str:
        return f"Coupling(N={self.n}, support={len(self.support())})"


def load_coupling(document, marginals: Sequence[FilteredProcess]) -> Coupling:
    if isinstance(document, (str, bytes, bytearray)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"coupling file is not valid JSON: {exc}") from exc
    if not isinstance(document, Mapping) or not isinstance(document.get("mass"), list):
        raise MalformedInput("coupling document needs a 'mass' list")
    mass: dict = {}
    for k, e in enumerate(document["mass"]):
        if not isinstance(e, Mapping) or "paths" not in e or "p" not in e:
            raise MalformedInput(f"mass entry #{k} needs 'paths' and 'p'")
        key = tuple(e["paths"])
        mass[key] = mass.get(key, 0.0) + float(e["p"])
    return Coupling(marginals, mass)


def product(*procs: FilteredProcess) -> Coupling:
    if len(procs) == 1 and not isinstance(procs[0], FilteredProcess):
        procs = tuple(procs[0])
    arr = np.ones(())
    for P in procs:
        arr = np.multiply.outer(arr, P.leaf_probs)
    return Coupling(procs, arr)


def check_horizons(procs):
    T = procs[0].horizon
    if any(P.horizon != T for P in procs):
        raise HorizonMismatch("all marginals must share one horizon")
    return T


def plain_violation(arr: np.ndarray, procs) -> tuple[float, str | None]:
    worst, witness = abs(arr.sum() - 1.0), "total mass"
    n = len(procs)
    for i, P in enumerate(procs):
        axes = tuple(j for j in range(n) if j != i)
        dev = np.abs(arr.sum(axis=axes) - P.leaf_probs)
        k = int(np.argmax(dev))
        if dev[k] > worst:
            worst, witness = float(dev[k]), f"marginal {i}, leaf {P.leaf_ids[k]}"
    return float(worst), witness


def causal_violation(arr: np.ndarray, procs, i: int, t: int) -> tuple[float, str | None]:
    """Worst deviation of the identity for marginal ``i`` at time ``t``.

    ``mu(w_{1:t}) pi(w, O_t) = mu(w) pi(w_{1:t}, O_t)`` over own leaves ``w``
    and prefixes ``O_t`` of the other marginals.
    """
    P = procs[i]
    depths = [t] * len(procs)
    depths[i] = P.horizon
    q = node_marginal(arr, procs, depths)
    q_pref = aggregate(q, i, P, t)
    anc = P.ancestors(P.horizon, t)
    shape = [1] * len(procs)
    shape[i] = -1
    mu_pref = P.probs(t)[anc].reshape(shape)
    mu = P.leaf_probs.reshape(shape)
    dev = np.abs(mu_pref * q - mu * np.take(q_pref, anc, axis=i))
    if dev.size == 0:
        return 0.0, None
    pos = np.unravel_index(int(np.argmax(dev)), dev.shape)
    worst = float(dev[pos])
    others = [procs[j].node_ids(t)[pos[j]] for j in range(len(procs)) if j != i]
    return worst, f"marginal {i}, t={t}, leaf {P.leaf_ids[pos[i]]}, others' prefix {others}"


def _constrained(mode: str, n: int) -> list[int]:
    if mode == "causal":
        return [0]
    if mode == "anticausal":
        return [1]
    if mode in ("bicausal", "multicausal"):
        return list(range(n))
    return []


def check_coupling(pi: Coupling, mode: str, tol: float = CHECK_TOL) -> CouplingReport:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    procs = pi.marginals
    if mode in ("causal", "anticausal", "bicausal") and pi.n != 2:
        raise ValueError(f"mode {mode!r} needs exactly two marginals")
    T = check_horizons(procs)
    worst, witness = plain_violation(pi.dense, procs)
    if worst > tol:
        return CouplingReport(False, mode, worst, f"marginal mismatch: {witness}")
    for i in _constrained(mode, pi.n):
        for t in range(1, T):
            v, w = causal_violation(pi.dense, procs, i, t)
            if v > worst:
                worst, witness = v, w
    return CouplingReport(worst <= tol, mode, worst, witness if worst > tol else None)


def require_marginals(pi: Coupling, tol: float = CHECK_TOL) -> None:
    worst, witness = plain_violation(pi.dense, pi.marginals)
    if worst > tol:
        raise MarginalMismatch(f"coupling marginals deviate by {worst:.3g} ({witness})")


def expected_cost(pi: Coupling, c) -> float:
    sup = pi.support()
    if isinstance(c, CostFunction):
        vals = c.evaluate(pi.marginals, sup)
    else:
        vals = cost_tensor(c, pi.marginals)[tuple(sup.T)]
    return float(vals @ pi.dense[tuple(sup.T)])


def disintegrate_coupling(pi: Coupling, t: int) -> dict[tuple, dict[tuple, float]]:
    """Conditional one-step joint laws given each support prefix tuple at depth ``t-1``.

    Keys are tuples of node ids; ``t = 1`` returns the time-1 joint law under
    the empty prefix ``()``.
    """
    procs = pi.marginals
    T = check_horizons(procs)
    if not 1 <= t <= T:
        raise OutOfRange(f"t must lie in 1..{T}")
    cur = pi.node_mass(t)
    ids = [P.node_ids(t) for P in procs]
    out: dict[tuple, dict[tuple, float]] = {}
    if t == 1:
        out[()] = {tuple(ids[i][k] for i, k in enumerate(row)): float(cur[tuple(row)])
                   for row in np.argwhere(cur > 0)}
        return out
    prev = pi.node_mass(t - 1)
    pids = [P.node_ids(t - 1) for P in procs]
    par = [P.parents(t) for P in procs]
    for row in np.argwhere(cur > 0):
        prow = tuple(par[i][k] for i, k in enumerate(row))
        key = tuple(pids[i][k] for i, k in enumerate(prow))
        out.setdefault(key, {})[tuple(ids[i][k] for i, k in enumerate(row))] = \
            float(cur[tuple(row)] / prev[prow])
    return out
