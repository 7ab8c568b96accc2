"""Robust superhedging of payoffs on several assets with unknown joint dynamics.

Each asset is a martingale scenario tree (``d = 1``).  The superhedging
price is the largest expected payoff over multicausal couplings, and a
dominating strategy is read off the dual compensators node by node.
"""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .costs import CostFunction, table_entries, cost_tensor
from .coupling import Coupling, CouplingReport, check_coupling, require_marginals
from .errors import IncompleteMarket, MalformedInput, NotMartingaleMarginal
from .potentials import DualPotential
from .process import is_martingale

MART_TOL = 1e-8
HEDGE_TOL = 1e-7


@dataclass
class Payoff:
    """Payoff ``xi`` on leaf tuples with optional per-asset growth bounds ``l^i``."""

    xi: object                     # CostFunction or dense array
    bounds: list | None = None     # per asset: {leaf id: bound}

    def tensor(self, marginals) -> np.ndarray:
        return cost_tensor(self.xi, marginals)

    def check_bounds(self, marginals) -> float:
        """Largest excess of ``xi`` over ``sum_i l^i``; non-positive when dominated."""
        if self.bounds is None:
            return -np.inf
        n = len(marginals)
        total = np.zeros(tuple(P.n_leaves for P in marginals))
        for i, (P, b) in enumerate(zip(marginals, self.bounds)):
            try:
                vec = np.array([b[lid] for lid in P.leaf_ids], dtype=float)
            except KeyError as exc:
                raise MalformedInput(f"bound of asset {i} misses leaf {exc.args[0]!r}") from None
            shape = [1] * n
            shape[i] = -1
            total = total + vec.reshape(shape)
        return float((self.tensor(marginals) - total).max())


def load_payoff(document) -> Payoff:
    if isinstance(document, (str, bytes, bytearray)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"payoff file is not valid JSON: {exc}") from exc
    if not isinstance(document, Mapping):
        raise MalformedInput("payoff document must be an object")
    xi = CostFunction.table(table_entries(document, "xi"))
    bounds = document.get("bounds")
    if bounds is not None and not (isinstance(bounds, list) and all(isinstance(b, Mapping) for b in bounds)):
        raise MalformedInput("'bounds' must be a list of per-asset tables")
    return Payoff(xi, bounds)


def _as_payoff(xi) -> Payoff:
    return xi if isinstance(xi, Payoff) else Payoff(xi)


def require_martingales(marginals: Sequence) -> None:
    for i, P in enumerate(marginals):
        if P.dimension != 1:
            raise NotMartingaleMarginal(f"asset {i} must be one-dimensional")
        rep = is_martingale(P)
        if not rep.ok:
            raise NotMartingaleMarginal(
                f"asset {i} is not a martingale (deviation {rep.worst_violation:.3g} at {rep.witness})")


# --------------------------------------------------------------------- NA
@dataclass(frozen=True)
class NAReport:
    ok: bool
    joint_martingale: bool
    multicausal: bool
    martingale_violation: float
    multicausal_violation: float
    witness: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def joint_martingale_violation(pi: Coupling) -> tuple[float, str | None]:
    """Mass-weighted failure of ``E[X^i_{t+1} | joint prefix at t] = X^i_t``."""
    procs = pi.marginals
    n = len(procs)
    T = procs[0].horizon
    worst, witness = 0.0, None
    for t in range(1, T):
        nxt = pi.node_mass(t + 1)
        for i, P in enumerate(procs):
            shape = [1] * n
            shape[i] = -1
            inc = (P.values(t + 1)[:, 0] - P.values(t)[P.parents(t + 1), 0]).reshape(shape)
            W = nxt * inc
            for j, Q in enumerate(procs):
                W = np.add.reduceat(W, Q.child_ptr(t)[:-1], axis=j)
            dev = np.abs(W)
            k = np.unravel_index(int(np.argmax(dev)), dev.shape)
            if dev[k] > worst:
                worst = float(dev[k])
                witness = f"asset {i}, t={t}, prefix {[procs[j].node_ids(t)[k[j]] for j in range(n)]}"
    return worst, witness


def check_na(pi: Coupling, tol: float = MART_TOL) -> NAReport:
    """Joint martingale property of ``pi`` and its multicausality, side by side."""
    require_martingales(pi.marginals)
    require_marginals(pi)
    mv, witness = joint_martingale_violation(pi)
    mc: CouplingReport = check_coupling(pi, "multicausal", tol)
    jm = mv <= tol
    return NAReport(jm == mc.ok, jm, mc.ok, mv, mc.worst_violation, witness or mc.witness)


# ------------------------------------------------------------------ price
@dataclass
class HedgeResult:
    price: float
    worst_case_model: Coupling
    dual: DualPotential
    lp: object = field(repr=False, default=None)


def superhedge_price(marginals: Sequence, xi, mode: str = "multicausal") -> HedgeResult:
    """``max E_pi[xi]`` over admissible couplings, with the attaining model and dual."""
    from .causal_solver import extract_dual, solve_adapted_lp
    procs = list(marginals)
    require_martingales(procs)
    pay = _as_payoff(xi)
    if pay.check_bounds(procs) > 1e-9:
        raise MalformedInput("payoff is not dominated by the supplied bounds")
    res = solve_adapted_lp(procs, -pay.tensor(procs), mode)
    dual = extract_dual(res)
    return HedgeResult(-res.value, res.coupling, dual, res)


# --------------------------------------------------------------- strategy
@dataclass
class Strategy:
    marginals: list
    p0: float
    x0: np.ndarray                 # E[X^i_1] per asset
    deltas: dict                   # t -> array (n^1_t, ..., n^N_t, N); t = 0 -> (N,)
    residual: float = 0.0

    def wealth(self) -> np.ndarray:
        """Terminal wealth on every leaf tuple."""
        procs = self.marginals
        n = len(procs)
        T = procs[0].horizon
        out = np.full(tuple(P.n_leaves for P in procs), self.p0)
        for t in range(1, T + 1):
            for i, P in enumerate(procs):
                shape = [1] * n
                shape[i] = -1
                prev = self.x0[i] if t == 1 else P.values(t - 1)[P.ancestors(T, t - 1), 0]
                inc = (P.values(t)[P.ancestors(T, t), 0] - prev).reshape(shape)
                if t == 1:
                    d = self.deltas[0][i]
                else:
                    d = self.deltas[t - 1][..., i][np.ix_(*[Q.ancestors(T, t - 1) for Q in procs])]
                out = out + d * inc
        return out

    def to_document(self) -> dict:
        procs = self.marginals
        doc = {"p0": self.p0, "x0": self.x0.tolist(), "deltas": [{"t": 0, "entries": [
            {"prefix": [], "delta": self.deltas[0].tolist()}]}]}
        for t in sorted(k for k in self.deltas if k > 0):
            D = self.deltas[t]
            entries = [{"prefix": [procs[j].node_ids(t)[p] for j, p in enumerate(pos)],
                        "delta": D[pos].tolist()} for pos in np.ndindex(D.shape[:-1])]
            doc["deltas"].append({"t": t, "entries": entries})
        return doc


def _node_delta(values, x, phi, complete: bool, least_squares: bool, where: str):
    """Solve ``delta * (v_c - x) = phi_c`` over the children ``c`` of one node."""
    inc = values - x
    if len(values) > 1 and not complete and not least_squares:
        raise IncompleteMarket(f"node {where} is not binomial; enable least squares to proceed")
    denom = inc @ inc
    delta = 0.0 if denom <= 1e-300 else float(inc @ phi / denom)
    return delta, float(np.abs(delta * inc - phi).max(initial=0.0))


def extract_strategy(marginals: Sequence, xi, dual: DualPotential,
                     least_squares: bool = False) -> Strategy:
    """Replicate each asset's compensated dual martingale by trading that asset.

    ``dual`` must be a multicausal optimizer for the cost ``-xi``.
    """
    procs = list(marginals)
    n = len(procs)
    T = procs[0].horizon
    require_martingales(procs)
    phi1 = [-a for a in dual.initial]
    p0 = float(sum(P.probs(1) @ f for P, f in zip(procs, phi1)))
    x0 = np.array([float(P.probs(1) @ P.values(1)[:, 0]) for P in procs])
    worst = 0.0
    d0 = np.zeros(n)
    for i, P in enumerate(procs):
        vals = P.values(1)[:, 0]
        complete = len(vals) <= 2 and len(set(vals.tolist())) == len(vals)
        d0[i], r = _node_delta(vals, x0[i], phi1[i] - P.probs(1) @ phi1[i], complete, least_squares,
                               f"root of asset {i}")
        worst = max(worst, r)
    deltas = {0: d0}
    for t in range(2, T + 1):
        D = np.zeros((*[P.n_nodes(t - 1) for P in procs], n))
        for i, P in enumerate(procs):
            comp = -dual.compensators[i][t]            # (own node_t, others at t-1)
            vals = P.values(t)[:, 0]
            for u in range(P.n_nodes(t - 1)):
                ch = P.children(t - 1, u)
                cv = vals[ch.start:ch.stop]
                complete = len(cv) <= 2 and len(set(cv.tolist())) == len(cv)
                x = P.values(t - 1)[u, 0]
                for opos in np.ndindex(*comp.shape[1:]):
                    phi = comp[(slice(ch.start, ch.stop), *opos)]
                    d, r = _node_delta(cv, x, phi, complete, least_squares,
                                       f"{P.node_ids(t - 1)[u]} of asset {i}")
                    worst = max(worst, r)
                    pos = list(opos)
                    pos.insert(i, u)
                    D[(*pos, i)] = d
        deltas[t - 1] = D
    if worst > HEDGE_TOL:
        raise IncompleteMarket(f"dual increments are not replicable (residual {worst:.3g})")
    return Strategy(procs, p0, x0, deltas, worst)


@dataclass(frozen=True)
class SuperhedgeReport:
    ok: bool
    min_slack: float
    witness: tuple | None
    equality_deviation: float | None = None
    price_deviation: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_superhedge(strategy: Strategy, xi, pistar: Coupling | None = None,
                      tol: float = HEDGE_TOL) -> SuperhedgeReport:
    procs = strategy.marginals
    xt = _as_payoff(xi).tensor(procs)
    slack = strategy.wealth() - xt
    k = np.unravel_index(int(np.argmin(slack)), slack.shape)
    min_slack = float(slack[k])
    witness = tuple(procs[j].leaf_ids[k[j]] for j in range(len(procs))) if min_slack < -tol else None
    ok = min_slack >= -tol
    eq = price = None
    if pistar is not None:
        sup = pistar.dense > 1e-12
        eq = float(np.abs(slack[sup]).max(initial=0.0))
        price = abs(strategy.p0 - float((pistar.dense * xt).sum()))
        ok = ok and eq <= tol and price <= tol
    return SuperhedgeReport(ok, min_slack, witness, eq, price)
