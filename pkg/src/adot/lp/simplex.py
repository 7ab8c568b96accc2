"""Two-phase dense tableau simplex for ``min c.x  s.t.  A x = b, x >= 0``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalFailure

PIVOT_TOL = 1e-9
INFEAS_TOL = 1e-9


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.c = np.ascontiguousarray(self.c, dtype=float).ravel()
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        m, n = self.A.shape
        if self.c.size != n or self.b.size != m:
            raise ValueError(f"inconsistent LP shapes: A {self.A.shape}, b {self.b.size}, c {self.c.size}")
        if not (np.isfinite(self.A).all() and np.isfinite(self.b).all() and np.isfinite(self.c).all()):
            raise ValueError("LP data must be finite")


@dataclass
class LPSolution:
    status: str
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    value: float = float("nan")
    iterations: int = 0
    residuals: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _kernel(backend):
    if backend is None:
        from . import kernel
        return kernel
    if backend == "python":
        from . import _kernel_py
        return _kernel_py
    if backend == "compiled":
        from . import _kernel
        return _kernel
    return backend


def solve_lp(lp: LinearProgram, backend=None) -> LPSolution:
    """Solve ``lp`` to optimality.

    Duals ``y`` satisfy ``c - A^T y >= 0`` at optimum; rows found redundant
    in phase 1 receive multiplier 0.
    """
    kern = _kernel(backend)
    A, b, c = lp.A, lp.b, lp.c
    m, n = A.shape
    if m == 0:
        if (c < -PIVOT_TOL).any():
            return LPSolution("unbounded")
        x = np.zeros(n)
        return LPSolution("optimal", x, np.zeros(0), 0.0, 0,
                          _residuals(lp, x, np.zeros(0)))

    sign = np.where(b < 0, -1.0, 1.0)
    As, bs = A * sign[:, None], b * sign
    max_iter = 50 * (m + n) + 1000
    bland_after = 5 * (m + n)

    # phase 1 with artificials in columns n..n+m-1
    tab = np.zeros((m + 1, n + m + 1))
    tab[1:, :n] = As
    tab[1:, n:n + m] = np.eye(m)
    tab[1:, -1] = bs
    tab[0, :n] = -As.sum(axis=0)
    tab[0, -1] = -bs.sum()
    basis = np.arange(n, n + m, dtype=np.intp)
    status, it1, degen = kern.simplex_loop(tab, basis, n, PIVOT_TOL, max_iter, bland_after, 0)
    if status != 0:
        raise NumericalFailure(f"phase 1 terminated with status {status} after {it1} pivots")
    if -tab[0, -1] > INFEAS_TOL * max(1.0, np.abs(bs).max()):
        return LPSolution("infeasible", iterations=it1,
                          residuals={"phase1_objective": float(-tab[0, -1])})

    # drive remaining artificials out of the basis or drop their rows
    keep = np.ones(m + 1, dtype=bool)
    for i in range(1, m + 1):
        if basis[i - 1] < n:
            continue
        row = np.abs(tab[i, :n])
        j = int(np.argmax(row))
        if row[j] > PIVOT_TOL:
            kern.pivot(tab, basis, i, j)
        else:
            keep[i] = False
    rows = np.flatnonzero(keep[1:])
    tab = np.ascontiguousarray(np.concatenate([tab[keep][:, :n], tab[keep][:, -1:]], axis=1))
    basis = np.ascontiguousarray(basis[rows])

    # phase 2
    cb = c[basis]
    tab[0, :n] = c - cb @ tab[1:, :n]
    tab[0, -1] = -cb @ tab[1:, -1]
    status, it2, _ = kern.simplex_loop(tab, basis, n, PIVOT_TOL, max_iter, bland_after, degen)
    iters = it1 + it2
    if status == 1:
        return LPSolution("unbounded", iterations=iters)
    if status != 0:
        raise NumericalFailure(f"simplex hit the iteration cap ({max_iter}) without converging")

    x = np.zeros(n)
    x[basis] = np.maximum(tab[1:, -1], 0.0)
    y = np.zeros(m)
    B = A[rows][:, basis]
    try:
        xb = np.linalg.solve(B, b[rows])
        yk = np.linalg.solve(B.T, c[basis])
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("singular final basis") from exc
    if np.isfinite(xb).all() and xb.min() >= -1e-9:
        x[:] = 0.0
        x[basis] = np.maximum(xb, 0.0)
    y[rows] = yk
    res = _residuals(lp, x, y)
    return LPSolution("optimal", x, y, float(c @ x), iters, res)


def _residuals(lp: LinearProgram, x, y) -> dict:
    rc = lp.c - lp.A.T @ y
    primal = float(np.abs(lp.A @ x - lp.b).max(initial=0.0))
    dual = float(max(0.0, -rc.min(initial=0.0)))
    comp = float(np.abs(x * rc).max(initial=0.0))
    gap = float(abs(lp.c @ x - lp.b @ y))
    return {"primal": primal, "dual": dual, "complementarity": comp, "gap": gap}
