"""Adapted transport as one LP over leaf tuples, with structured duals and polar sets.

Causality of marginal ``i`` at time ``t`` is imposed through the normalized
identities

    pi(w, O) - K(w | w_{1:t}) pi(w_{1:t}, O) = 0

for every own leaf ``w`` and every tuple ``O`` of the other marginals'
depth-``t`` prefixes.  Within a group sharing ``w_{1:t}`` these rows sum to
zero, so the row of the last leaf of each group is dropped.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .costs import cost_tensor
from .coupling import Coupling, CouplingReport, check_coupling, check_horizons
from .errors import CertificateFailed, Infeasible, NotPolar, NumericalFailure
from .lp import LinearProgram, LPSolution, solve_lp
from .potentials import DualPotential, doob_pieces, lift_piece

__all__ = ["AdaptedLPResult", "DualPotential", "PolarCertificate", "constrained_marginals",
           "extract_dual", "polar_certificate", "polar_max", "solve_adapted_lp"]

MODES = ("plain", "causal", "anticausal", "bicausal", "multicausal")
POLAR_TOL = 1e-9


def constrained_marginals(mode: str, n: int) -> list[int]:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode in ("causal", "anticausal", "bicausal") and n != 2:
        raise ValueError(f"mode {mode!r} needs exactly two marginals")
    if mode == "multicausal" and n < 2:
        raise ValueError("multicausal mode needs at least two marginals")
    return {"plain": [], "causal": [0], "anticausal": [1]}.get(mode, list(range(n)))


def _expand(vec: np.ndarray, axis: int, n: int) -> np.ndarray:
    shape = [1] * n
    shape[axis] = vec.shape[0]
    return vec.reshape(shape)


def marginal_rows(procs: Sequence, shape: tuple) -> tuple[list, list, list]:
    """Rows fixing every marginal; one redundant row per marginal ``i >= 1`` is skipped."""
    n = len(procs)
    rows, rhs, meta = [], [], []
    for i, P in enumerate(procs):
        L = shape[i]
        for k in range(L - 1 if i >= 1 else L):
            e = np.zeros(L)
            e[k] = 1.0
            rows.append(np.broadcast_to(_expand(e, i, n), shape).ravel())
            rhs.append(P.leaf_probs[k])
            meta.append(("marginal", i, k))
    return rows, rhs, meta


def causal_rows(procs: Sequence, i: int, shape: tuple) -> tuple[list, list]:
    """Pruned causality rows of marginal ``i`` for ``t = 1..T-1``."""
    n = len(procs)
    P = procs[i]
    T = P.horizon
    others = [j for j in range(n) if j != i]
    rows, meta = [], []
    for t in range(1, T):
        anc = P.ancestors(T, t)
        K = P.leaf_probs / P.probs(t)[anc]
        last = np.r_[anc[1:] != anc[:-1], True]
        oanc = {j: procs[j].ancestors(T, t) for j in others}
        oshape = [procs[j].n_nodes(t) for j in others]
        for w in np.flatnonzero(~last):
            u = -K[w] * (anc == anc[w])
            u[w] += 1.0
            base = _expand(u, i, n)
            for O in np.ndindex(*oshape):
                row = base
                for j, o in zip(others, O):
                    row = row * _expand((oanc[j] == o).astype(float), j, n)
                rows.append(np.broadcast_to(row, shape).ravel())
                meta.append(("causal", i, t, int(w), O))
    return rows, meta


@dataclass
class AdaptedLPResult:
    mode: str
    marginals: list
    value: float
    coupling: Coupling
    cost: np.ndarray
    lp: LPSolution
    row_meta: list
    report: CouplingReport

    @property
    def lp_duals(self) -> np.ndarray:
        return self.lp.y

    def diagnostics(self) -> dict:
        r = self.lp.residuals
        return {"duality_gap": r["gap"], "max_constraint_residual": r["primal"],
                "lp_iterations": self.lp.iterations}


def solve_adapted_lp(marginals: Sequence, c, mode: str) -> AdaptedLPResult:
    """Minimize ``E_pi[c]`` over couplings satisfying the causality constraints of ``mode``."""
    procs = list(marginals)
    check_horizons(procs)
    constrained = constrained_marginals(mode, len(procs))
    cost = cost_tensor(c, procs)
    shape = cost.shape
    rows, rhs, meta = marginal_rows(procs, shape)
    for i in constrained:
        r, m = causal_rows(procs, i, shape)
        rows += r
        rhs += [0.0] * len(r)
        meta += m
    lp = LinearProgram(cost.ravel(), np.array(rows), np.array(rhs))
    sol = solve_lp(lp)
    if sol.status == "infeasible":
        raise Infeasible("adapted transport LP is infeasible")
    if not sol.optimal:
        raise NumericalFailure(f"adapted transport LP returned status {sol.status}")
    pi = Coupling(procs, np.maximum(sol.x.reshape(shape), 0.0))
    report = check_coupling(pi, "multicausal" if mode == "multicausal" else mode)
    if not report.ok:
        raise NumericalFailure(f"LP coupling violates {mode} constraints by {report.worst_violation:.3g}")
    return AdaptedLPResult(mode, procs, float(sol.value), pi, cost, sol, meta, report)


def extract_dual(res: AdaptedLPResult, verify: bool = True) -> DualPotential:
    """Turn LP multipliers into initial potentials plus zero-mean compensators."""
    procs = res.marginals
    n = len(procs)
    T = procs[0].horizon
    constrained = set(constrained_marginals(res.mode, n))
    y = res.lp.y
    h = [np.zeros(P.n_leaves) for P in procs]
    lam: dict[tuple[int, int], np.ndarray] = {}
    for val, meta in zip(y, res.row_meta):
        if meta[0] == "marginal":
            h[meta[1]][meta[2]] = val
        else:
            _, i, t, w, O = meta
            key = (i, t)
            if key not in lam:
                oshape = [procs[j].n_nodes(t) for j in range(n) if j != i]
                lam[key] = np.zeros((procs[i].n_leaves, *oshape))
            lam[key][(w, *O)] = val

    initial, terminal, comps = [], [], []
    for i, P in enumerate(procs):
        others = [procs[j] for j in range(n) if j != i]
        comp = {s: np.zeros((P.n_nodes(s), *[o.n_nodes(s - 1) for o in others]))
                for s in range(2, T + 1)}
        if i in constrained:
            f1, pieces = doob_pieces(P, h[i], 1)
            for s, piece in pieces.items():
                comp[s] += lift_piece(piece, others, s, None)
            initial.append(f1)
            terminal.append(None)
        else:
            initial.append(None)
            terminal.append(h[i].copy())
        for t in range(1, T):
            if (i, t) not in lam:
                continue
            _, pieces = doob_pieces(P, lam[(i, t)], t)
            for s, piece in pieces.items():
                comp[s] += lift_piece(piece, others, s, t)
        comps.append(comp if i in constrained else {})
    dual = DualPotential(res.mode, procs, initial, comps, terminal)
    dual.recenter().regauge()
    if verify:
        dual.verify(res.cost, res.value)
    return dual


# -------------------------------------------------------------- polar sets
def event_mask(E, marginals: Sequence) -> np.ndarray:
    """Boolean leaf-tuple mask from a mask array or an iterable of leaf-id tuples."""
    shape = tuple(P.n_leaves for P in marginals)
    if isinstance(E, np.ndarray) and E.dtype == bool:
        if E.shape != shape:
            raise ValueError(f"event mask has shape {E.shape}, expected {shape}")
        return E
    index = [{lid: k for k, lid in enumerate(P.leaf_ids)} for P in marginals]
    mask = np.zeros(shape, dtype=bool)
    for tup in E:
        try:
            mask[tuple(index[i][lid] for i, lid in enumerate(tup))] = True
        except KeyError as exc:
            raise ValueError(f"unknown leaf id {exc.args[0]!r} in event") from None
    return mask


def polar_max(E, marginals: Sequence, mode: str = "multicausal") -> float:
    """``max pi(E)`` over the couplings admissible for ``mode``."""
    mask = event_mask(E, marginals)
    if not mask.any():
        return 0.0
    return -solve_adapted_lp(marginals, -mask.astype(float), mode).value


@dataclass
class PolarCertificate:
    mode: str
    marginals: list
    first: list          # per marginal: boolean mask of admitted time-1 nodes
    slices: dict         # (t, i) -> bool array (own node at t, joint prefix at t-1)
    gluing: np.ndarray   # leaf tuples inside the glued full set
    value: float

    def to_document(self) -> dict:
        procs = self.marginals
        n = len(procs)
        doc = {"mode": self.mode, "max_mass": self.value + 0.0,
               "initial_sets": [[nid for nid, ok in zip(P.node_ids(1), self.first[i]) if ok]
                                for i, P in enumerate(procs)],
               "slices": []}
        for (t, i), sl in sorted(self.slices.items()):
            P = procs[i]
            own = P.node_ids(t)
            for pref in np.ndindex(*sl.shape[1:]):
                members = [own[c] for c in P.children(t - 1, pref[i]) if sl[(c, *pref)]]
                doc["slices"].append({"t": t, "marginal": i,
                                      "prefix": [procs[j].node_ids(t - 1)[pref[j]] for j in range(n)],
                                      "set": members})
        return doc


def _potential_parts(dual: DualPotential) -> tuple[list, list]:
    """Time-1 parts and compensators, with terminal potentials split along their own filtration."""
    procs = dual.marginals
    n = len(procs)
    firsts, comps = [], []
    for i, P in enumerate(procs):
        others = [procs[j] for j in range(n) if j != i]
        if dual.terminal[i] is not None:
            f1, pieces = doob_pieces(P, dual.terminal[i], 1)
            comp = {s: lift_piece(p, others, s, None) for s, p in pieces.items()}
        else:
            f1, comp = dual.initial[i], {s: dual.compensators[i].get(s) for s in range(2, P.horizon + 1)}
            comp = {s: (np.zeros((P.n_nodes(s), *[o.n_nodes(s - 1) for o in others])) if a is None else a)
                    for s, a in comp.items()}
        firsts.append(f1)
        comps.append(comp)
    return firsts, comps


def polar_certificate(E, marginals: Sequence, mode: str = "multicausal") -> PolarCertificate:
    """Certify ``pi(E) = 0`` for all admissible ``pi`` by glued full sets.

    The sets are zero-level sets of a dual optimizer for the cost ``-1_E``.
    Raises :class:`NotPolar` when ``E`` is charged by some coupling and
    :class:`CertificateFailed` when the construction does not verify.
    """
    procs = list(marginals)
    n = len(procs)
    T = procs[0].horizon
    mask = event_mask(E, procs)
    res = solve_adapted_lp(procs, -mask.astype(float), mode)
    charged = -res.value
    dual = extract_dual(res)
    firsts, comps = _potential_parts(dual)
    scale = max([np.abs(f).max(initial=0.0) for f in firsts]
                + [np.abs(a).max(initial=0.0) for cs in comps for a in cs.values()])
    scale = scale if scale > 0 else 1.0

    problems = []
    first = [np.abs(f) / scale <= POLAR_TOL for f in firsts]
    for i, P in enumerate(procs):
        mass = P.probs(1) @ first[i]
        if mass < 1 - POLAR_TOL:
            problems.append(f"initial set of marginal {i} has mass {mass:.3g}")
    glued = np.ones((1,) * n, dtype=bool)
    for i in range(n):
        glued = glued & _expand(first[i], i, n)

    slices = {}
    for t in range(2, T + 1):
        parents = [P.parents(t) for P in procs]
        new = glued[np.ix_(*parents)]
        for i, P in enumerate(procs):
            zero = np.abs(comps[i][t]) / scale <= POLAR_TOL
            # kernel mass of the slice, indexed by the joint depth-(t-1) prefix
            kmass = np.add.reduceat(zero * P.cond_probs(t).reshape(-1, *([1] * (n - 1))),
                                    P.child_ptr(t - 1)[:-1], axis=0)
            kmass = np.moveaxis(kmass, 0, i)
            bad = glued & (kmass < 1 - POLAR_TOL)
            if bad.any():
                pos = np.argwhere(bad)[0]
                problems.append(f"slice of marginal {i} at t={t} after prefix "
                                f"{[procs[j].node_ids(t - 1)[pos[j]] for j in range(n)]} is not full")
            if mode == "causal" and i == 1 and not (zero == zero[:, :1]).all():
                problems.append(f"target-side set at t={t} depends on the source prefix")
            # outside the glued prefixes every slice is the full child set
            full_shape = (P.n_nodes(t), *[Q.n_nodes(t - 1) for Q in procs])
            slices[(t, i)] = np.broadcast_to(np.expand_dims(zero, i + 1), full_shape) | ~glued[None]
            idx = [np.arange(P.n_nodes(t))] + [parents[j] for j in range(n) if j != i]
            new = new & np.moveaxis(zero[np.ix_(*idx)], 0, i)
        glued = new

    hit = mask & glued
    if hit.any():
        pos = np.argwhere(hit)[0]
        problems.append(f"event tuple {[procs[j].leaf_ids[pos[j]] for j in range(n)]} lies in the glued set")
    if problems:
        if charged > POLAR_TOL:
            raise NotPolar(f"event is charged with mass {charged:.6g} by an admissible coupling")
        raise CertificateFailed("; ".join(problems))
    return PolarCertificate(mode, procs, first, slices, glued, charged)


def iter_events(shape: tuple) -> Iterable[np.ndarray]:
    """All boolean events on a leaf-tuple grid (exponential; small grids only)."""
    size = int(np.prod(shape))
    for bits in range(1 << size):
        yield np.array([(bits >> k) & 1 for k in range(size)], dtype=bool).reshape(shape)
