"""One-step discrete optimal transport through the simplex engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalFailure
from .simplex import LinearProgram, solve_lp


@dataclass
class TransportResult:
    plan: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    value: float
    iterations: int = 0


def transport_lp(p, q, C) -> LinearProgram:
    m, n = C.shape
    A = np.zeros((m + n - 1, m * n))
    for a in range(m):
        A[a, a * n:(a + 1) * n] = 1.0
    # the last column constraint is implied by the others
    for k in range(n - 1):
        A[m + k, k::n] = 1.0
    return LinearProgram(C.ravel(), A, np.concatenate([p, q[:-1]]))


def solve_transport(p, q, C, backend=None) -> TransportResult:
    """Optimal plan and potentials ``phi + psi <= C`` with ``psi[-1] = 0``."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    C = np.asarray(C, dtype=float).reshape(p.size, q.size)
    m, n = C.shape
    if m == 1 or n == 1:
        # forced plan; the potentials are read off directly
        plan = np.outer(p, q)
        if n == 1:
            phi, psi = C[:, 0].copy(), np.zeros(1)
        else:
            psi = C[0] - C[0, -1]
            phi = np.array([C[0, -1]])
        return TransportResult(plan, phi, psi, float((plan * C).sum()))
    sol = solve_lp(transport_lp(p, q, C), backend=backend)
    if not sol.optimal:
        raise NumericalFailure(f"transport subproblem returned status {sol.status}")
    plan = sol.x.reshape(m, n)
    phi = sol.y[:m].copy()
    psi = np.concatenate([sol.y[m:], [0.0]])
    return TransportResult(plan, phi, psi, float((plan * C).sum()), sol.iterations)
