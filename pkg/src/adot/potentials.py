"""Structured dual potentials: initial parts plus zero-mean compensators.

For marginal ``i`` and time ``s >= 2`` a compensator is a table indexed by
``(own node at depth s, others' nodes at depth s-1)`` whose average over the
own children of every node vanishes.  The represented function on leaf
tuples is

    s(w) = sum_i [ f^i_1(w^i_1) + sum_s f^i_s(w^i_{1:s}, w^{-i}_{1:s-1}) ] + sum_i g^i(w^i),

where ``g^i`` (``terminal``) is only used for a marginal without causality
constraints (the target side of a causal problem).
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .coupling import aggregate
from .errors import DualVerificationFailed

MEAN_TOL = 1e-9
FEAS_TOL = 1e-7


def cond_expect(own, h: np.ndarray, s: int) -> np.ndarray:
    """``E[h | own prefix at depth s]`` for ``h`` with own leaves on axis 0."""
    extra = (1,) * (h.ndim - 1)
    w = own.leaf_probs.reshape(-1, *extra)
    return aggregate(h * w, 0, own, s) / own.probs(s).reshape(-1, *extra)


def doob_pieces(own, h: np.ndarray, t: int) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Split ``h`` (own leaves on axis 0) into ``E[h | depth t]`` and increments.

    Returns ``(H_t, {s: H_s - H_{s-1}})`` for ``s = t+1..T``; each increment is
    indexed by the own depth-``s`` node on axis 0.
    """
    T = own.horizon
    H = {s: cond_expect(own, h, s) for s in range(t, T + 1)}
    pieces = {s: H[s] - H[s - 1][own.parents(s)] for s in range(t + 1, T + 1)}
    return H[t], pieces


def lift_piece(piece: np.ndarray, others: Sequence, s: int, t: int | None) -> np.ndarray:
    """Re-index a depth-``s`` increment to the others' depth ``s-1`` nodes.

    ``piece`` carries others' axes at depth ``t`` (or none when ``t`` is None).
    """
    target = [o.n_nodes(s - 1) for o in others]
    if t is None:
        return np.broadcast_to(piece.reshape(-1, *([1] * len(others))),
                               (piece.shape[0], *target)).copy()
    idx = [np.arange(piece.shape[0])] + [o.ancestors(s - 1, t) for o in others]
    return piece[np.ix_(*idx)]


def compensator_mean(own, s: int, comp: np.ndarray) -> np.ndarray:
    """Kernel average of ``comp`` over the own children of each depth ``s-1`` node."""
    w = own.cond_probs(s).reshape(-1, *([1] * (comp.ndim - 1)))
    return np.add.reduceat(comp * w, own.child_ptr(s - 1)[:-1], axis=0)


def _expand(arr: np.ndarray, axis: int, n: int) -> np.ndarray:
    shape = [1] * n
    shape[axis] = arr.shape[0]
    return arr.reshape(shape)


@dataclass
class DualPotential:
    mode: str
    marginals: list
    initial: list            # per marginal: array on time-1 nodes or None
    compensators: list       # per marginal: {s: array (n^i_s, *others at s-1)}
    terminal: list = field(default_factory=list)   # per marginal: leaf array or None

    def __post_init__(self):
        if not self.terminal:
            self.terminal = [None] * len(self.marginals)

    @property
    def n(self) -> int:
        return len(self.marginals)

    def others(self, i: int) -> list:
        return [m for j, m in enumerate(self.marginals) if j != i]

    # ---------------------------------------------------------------- values
    def integrals(self) -> np.ndarray:
        out = np.zeros(self.n)
        for i, P in enumerate(self.marginals):
            if self.initial[i] is not None:
                out[i] += P.probs(1) @ self.initial[i]
            if self.terminal[i] is not None:
                out[i] += P.leaf_probs @ self.terminal[i]
        return out

    @property
    def value(self) -> float:
        return float(self.integrals().sum())

    def s_tensor(self) -> np.ndarray:
        procs = self.marginals
        n = self.n
        T = procs[0].horizon
        out = np.zeros(tuple(P.n_leaves for P in procs))
        for i, P in enumerate(procs):
            if self.initial[i] is not None:
                out = out + _expand(self.initial[i][P.ancestors(T, 1)], i, n)
            if self.terminal[i] is not None:
                out = out + _expand(self.terminal[i], i, n)
            for s, comp in self.compensators[i].items():
                idx = [P.ancestors(T, s)] + [o.ancestors(T, s - 1) for o in self.others(i)]
                out = out + np.moveaxis(comp[np.ix_(*idx)], 0, i)
        return out

    def running(self, t: int) -> np.ndarray:
        """Partial sum up to time ``t`` on joint depth-``t`` prefixes."""
        procs = self.marginals
        n = self.n
        out = np.zeros(tuple(P.n_nodes(t) for P in procs))
        for i, P in enumerate(procs):
            if self.initial[i] is not None:
                out = out + _expand(self.initial[i][P.ancestors(t, 1)], i, n)
            for s, comp in self.compensators[i].items():
                if s > t:
                    continue
                idx = [P.ancestors(t, s)] + [o.ancestors(t, s - 1) for o in self.others(i)]
                out = out + np.moveaxis(comp[np.ix_(*idx)], 0, i)
        return out

    def max_compensator_mean(self) -> float:
        worst = 0.0
        for i, P in enumerate(self.marginals):
            for s, comp in self.compensators[i].items():
                worst = max(worst, float(np.abs(compensator_mean(P, s, comp)).max(initial=0.0)))
        return worst

    # ----------------------------------------------------------- normalizing
    def recenter(self) -> "DualPotential":
        for i, P in enumerate(self.marginals):
            for s, comp in self.compensators[i].items():
                comp -= compensator_mean(P, s, comp)[P.parents(s)]
        return self

    def regauge(self, total: float | None = None) -> "DualPotential":
        """Shift constants so every marginal integrates to ``total / N``."""
        ints = self.integrals()
        total = ints.sum() if total is None else total
        for i in range(self.n):
            shift = total / self.n - ints[i]
            if self.initial[i] is not None:
                self.initial[i] = self.initial[i] + shift
            else:
                self.terminal[i] = self.terminal[i] + shift
        return self

    def verify(self, cost: np.ndarray, primal: float, tol: float = FEAS_TOL) -> dict:
        """Check the dual against ``cost`` and the primal value.

        Raises :class:`DualVerificationFailed` on violation; returns the residuals.
        """
        excess = float((self.s_tensor() - cost).max())
        mean = self.max_compensator_mean()
        gap = abs(self.value - primal)
        report = {"max_excess": excess, "max_compensator_mean": mean, "duality_gap": gap}
        if excess > tol or mean > MEAN_TOL or gap > tol:
            raise DualVerificationFailed(
                f"dual verification failed: excess {excess:.3g}, compensator mean {mean:.3g}, gap {gap:.3g}")
        return report

    # ----------------------------------------------------------------- dump
    def to_document(self) -> dict:
        procs = self.marginals
        doc = {"mode": self.mode, "initial": [], "terminal": [], "compensators": []}
        if all(hasattr(P, "leaf_probs") for P in procs):
            doc["value"] = self.value
        for i, P in enumerate(procs):
            doc["initial"].append(None if self.initial[i] is None
                                  else dict(zip(P.node_ids(1), self.initial[i].tolist())))
            doc["terminal"].append(None if self.terminal[i] is None
                                   else dict(zip(P.leaf_ids, self.terminal[i].tolist())))
            tables = []
            for s, comp in sorted(self.compensators[i].items()):
                oth = [o.node_ids(s - 1) for o in self.others(i)]
                own = P.node_ids(s)
                entries = [{"node": own[pos[0]], "others": [oth[k][p] for k, p in enumerate(pos[1:])],
                            "value": float(comp[pos])} for pos in np.ndindex(comp.shape)]
                tables.append({"t": s, "entries": entries})
            doc["compensators"].append(tables)
        return doc
