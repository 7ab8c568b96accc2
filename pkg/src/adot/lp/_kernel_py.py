"""NumPy implementation of the pivot loop; same API as the compiled kernel."""

import numpy as np


def pivot(tab, basis, r, j):
    row = tab[r]
    row /= row[j]
    row[j] = 1.0
    nz = np.flatnonzero(row)
    col = tab[:, j].copy()
    col[r] = 0.0
    hit = np.flatnonzero(col)
    if hit.size:
        tab[np.ix_(hit, nz)] -= np.outer(col[hit], row[nz])
        tab[hit, j] = 0.0
    basis[r - 1] = j


def simplex_loop(tab, basis, n_enter, tol, max_iter, bland_after, degenerate=0):
    rhs = tab.shape[1] - 1
    it = 0
    status = 2
    while it < max_iter:
        rc = tab[0, :n_enter]
        if degenerate < bland_after:
            j = int(np.argmin(rc))
            if rc[j] >= -tol:
                status = 0
                break
        else:
            cand = np.flatnonzero(rc < -tol)
            if cand.size == 0:
                status = 0
                break
            j = int(cand[0])
        col = tab[1:, j]
        rows = np.flatnonzero(col > tol)
        if rows.size == 0:
            status = 1
            break
        ratios = np.maximum(tab[1 + rows, rhs], 0.0) / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12]
        r = 1 + int(ties[np.argmin(basis[ties])])
        if best <= tol:
            degenerate += 1
        pivot(tab, basis, r, j)
        it += 1
    return status, it, degenerate
