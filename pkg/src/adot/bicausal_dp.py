"""Backward induction for bicausal transport between two scenario trees.

``V_T = c`` on leaf pairs and ``V_{t-1}(u, v)`` is the optimal transport value
between the one-step kernels of ``u`` and ``v`` for the cost ``V_t`` restricted
to their children.  Gluing the locally optimal one-step plans yields a
globally optimal bicausal coupling.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .costs import CostFunction, cost_tensor
from .coupling import Coupling, CouplingReport, check_horizons, require_marginals
from .errors import DualVerificationFailed, MarginalMismatch
from .lp import solve_transport
from .potentials import DualPotential

CHECK_TOL = 1e-8
M_TOL = 1e-7


@dataclass
class ValueProcess:
    X: object
    Y: object
    tables: dict          # t -> array (n^X_t, n^Y_t), t = 1..T
    V0: float

    def __getitem__(self, t: int) -> np.ndarray:
        return np.array([[self.V0]]) if t == 0 else self.tables[t]

    @property
    def horizon(self) -> int:
        return self.X.horizon

    def to_document(self) -> dict:
        doc = {"V0": self.V0, "tables": []}
        for t in sorted(self.tables):
            xs, ys = self.X.node_ids(t), self.Y.node_ids(t)
            V = self.tables[t]
            doc["tables"].append({"t": t, "entries": [
                {"x": xs[a], "y": ys[b], "value": float(V[a, b])}
                for a in range(V.shape[0]) for b in range(V.shape[1])]})
        return doc


@dataclass
class BicausalSolution:
    value: float
    value_process: ValueProcess
    coupling: Coupling
    cost: np.ndarray
    local_plans: dict = field(repr=False)   # (t, u, v) -> plan over children of u x children of v
    local_duals: dict = field(repr=False)   # (t, u, v) -> (phi, psi)
    diagnostics: dict = field(default_factory=dict)


def _kernel_blocks(P, t: int):
    """Children ranges and kernels at depth ``t`` for every depth ``t-1`` node (virtual root at t=1)."""
    if t == 1:
        return [(range(P.n_nodes(1)), P.cond_probs(1))]
    cp = P.cond_probs(t)
    return [(r, cp[r.start:r.stop]) for r in (P.children(t - 1, u) for u in range(P.n_nodes(t - 1)))]


def _backward(X, Y, cost: np.ndarray, threads: int | None, keep: bool):
    T = X.horizon
    tables = {T: cost}
    plans, duals = {}, {}
    iters = 0

    def solve(args):
        t, u, v, bx, by, W = args
        r = solve_transport(bx[1], by[1], W[bx[0].start:bx[0].stop, by[0].start:by[0].stop])
        return t, u, v, r

    pool = ThreadPoolExecutor(max_workers=threads) if threads and threads > 1 else None
    try:
        for t in range(T, 0, -1):
            W = tables[t]
            bx, by = _kernel_blocks(X, t), _kernel_blocks(Y, t)
            jobs = [(t, u, v, bx[u], by[v], W) for u in range(len(bx)) for v in range(len(by))]
            results = pool.map(solve, jobs) if pool else map(solve, jobs)
            prev = np.empty((len(bx), len(by)))
            for tt, u, v, r in results:
                prev[u, v] = r.value
                iters += r.iterations
                if keep:
                    plans[(tt, u, v)] = r.plan
                    duals[(tt, u, v)] = (r.phi, r.psi)
            if t > 1:
                tables[t - 1] = prev
            else:
                V0 = float(prev[0, 0])
    finally:
        if pool:
            pool.shutdown()
    return ValueProcess(X, Y, tables, V0), plans, duals, iters


def value_process(X, Y, c, threads: int | None = None) -> ValueProcess:
    check_horizons([X, Y])
    return _backward(X, Y, cost_tensor(c, [X, Y]), threads, keep=False)[0]


def solve_bicausal(X, Y, c, threads: int | None = None) -> BicausalSolution:
    """Bicausal optimal value together with a glued optimal coupling."""
    start = time.perf_counter()
    check_horizons([X, Y])
    cost = cost_tensor(c, [X, Y])
    V, plans, duals, iters = _backward(X, Y, cost, threads, keep=True)
    T = X.horizon
    mass = plans[(1, 0, 0)].copy()
    for t in range(2, T + 1):
        nxt = np.zeros((X.n_nodes(t), Y.n_nodes(t)))
        for u, v in np.argwhere(mass > 0):
            rx, ry = X.children(t - 1, u), Y.children(t - 1, v)
            nxt[rx.start:rx.stop, ry.start:ry.stop] = mass[u, v] * plans[(t, u, v)]
        mass = nxt
    pi = Coupling([X, Y], mass)
    diag = {"lp_iterations": iters, "transport_solves": len(plans),
            "wall_time_ms": 1e3 * (time.perf_counter() - start)}
    return BicausalSolution(V.V0, V, pi, cost, plans, duals, diag)


def verify_value_martingale(V: ValueProcess, pi: Coupling, mode: str = "martingale",
                            tol: float = CHECK_TOL) -> CouplingReport:
    """Compare ``V_t`` with the conditional mean of ``V_{t+1}`` under ``pi`` on its support."""
    if mode not in ("martingale", "submartingale"):
        raise ValueError(f"unknown mode {mode!r}")
    X, Y = V.X, V.Y
    if [P.leaf_ids for P in pi.marginals] != [X.leaf_ids, Y.leaf_ids]:
        raise MarginalMismatch("coupling marginals differ from the value process trees")
    require_marginals(pi)
    T = V.horizon
    worst, witness = 0.0, None
    masses = {t: pi.node_mass(t) for t in range(1, T + 1)}
    masses[0] = np.ones((1, 1))
    for t in range(T):
        W = masses[t + 1] * V[t + 1]
        if t == 0:
            agg = W.sum().reshape(1, 1)
        else:
            agg = np.add.reduceat(np.add.reduceat(W, X.child_ptr(t)[:-1], axis=0),
                                  Y.child_ptr(t)[:-1], axis=1)
        P = masses[t]
        sup = P > 1e-14
        cond = np.where(sup, agg / np.where(sup, P, 1.0), 0.0)
        diff = V[t] - cond         # positive where the submartingale property fails
        dev = np.where(sup, diff if mode == "submartingale" else np.abs(diff), -np.inf)
        k = np.unravel_index(int(np.argmax(dev)), dev.shape)
        if dev[k] > worst:
            worst = float(dev[k])
            witness = (f"t={t}, prefix pair "
                       f"{('root', 'root') if t == 0 else (X.node_ids(t)[k[0]], Y.node_ids(t)[k[1]])}")
    return CouplingReport(worst <= tol, mode, worst, witness if worst > tol else None)


def dual_from_value(sol: BicausalSolution) -> DualPotential:
    """Telescope the one-step potentials into a bicausal dual optimizer."""
    V = sol.value_process
    X, Y = V.X, V.Y
    T = X.horizon
    f1, g1 = (a.copy() for a in sol.local_duals[(1, 0, 0)])
    fx = {t: np.zeros((X.n_nodes(t), Y.n_nodes(t - 1))) for t in range(2, T + 1)}
    gy = {t: np.zeros((Y.n_nodes(t), X.n_nodes(t - 1))) for t in range(2, T + 1)}
    for t in range(2, T + 1):
        kx, ky = X.cond_probs(t), Y.cond_probs(t)
        for u in range(X.n_nodes(t - 1)):
            rx = X.children(t - 1, u)
            for v in range(Y.n_nodes(t - 1)):
                ry = Y.children(t - 1, v)
                phi, psi = sol.local_duals[(t, u, v)]
                fx[t][rx.start:rx.stop, v] = phi - kx[rx.start:rx.stop] @ phi
                gy[t][ry.start:ry.stop, u] = psi - ky[ry.start:ry.stop] @ psi
    dual = DualPotential("bicausal", [X, Y], [f1, g1], [fx, gy])
    dual.recenter().regauge()
    dual.verify(sol.cost, sol.value)
    worst = max_martingale_gap(dual, V, sol.coupling)
    if worst > M_TOL:
        raise DualVerificationFailed(f"dual martingale departs from V by {worst:.3g} on the optimal support")
    return dual


def max_martingale_gap(dual: DualPotential, V: ValueProcess, pi: Coupling) -> float:
    """Largest ``|M_t - V_t|`` over prefix pairs charged by ``pi``."""
    worst = 0.0
    for t in range(1, V.horizon + 1):
        sup = pi.node_mass(t) > 1e-14
        if sup.any():
            worst = max(worst, float(np.abs(dual.running(t) - V[t])[sup].max()))
    return worst


def lipschitz_diagnostic(V: ValueProcess) -> dict:
    """Per time, the largest ratio of a change in ``V_t`` to the change of one node value (l1)."""
    out = {}
    for t in range(1, V.horizon + 1):
        Vt = V[t]
        xv, yv = V.X.values(t), V.Y.values(t)
        best = 0.0
        dx = np.abs(xv[:, None, :] - xv[None, :, :]).sum(-1)
        dy = np.abs(yv[:, None, :] - yv[None, :, :]).sum(-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            rx = np.abs(Vt[:, None, :] - Vt[None, :, :]) / dx[:, :, None]
            ry = np.abs(Vt[:, :, None] - Vt[:, None, :]) / dy[None, :, :]
        for r in (rx, ry):
            r = r[np.isfinite(r)]
            if r.size:
                best = max(best, float(r.max()))
        out[t] = best
    return out


def adapted_wasserstein(X, Y, p: int = 1, cap: float | None = None, threads: int | None = None) -> float:
    return value_process(X, Y, CostFunction.lp_sum(p, cap), threads).V0
