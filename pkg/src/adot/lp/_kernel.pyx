# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pivot loop of the dense tableau simplex.

Tableau layout: row 0 holds reduced costs, rows ``1..m`` the constraint rows,
the last column the right-hand side (``tab[0, -1]`` is minus the objective).
``basis[i]`` is the basic column of row ``i + 1``.
"""

from libc.stdlib cimport malloc, free

cdef int _pivot(double[:, ::1] tab, Py_ssize_t[::1] basis, Py_ssize_t r, Py_ssize_t j,
                Py_ssize_t* nz) noexcept nogil:
    cdef Py_ssize_t nrow = tab.shape[0], ncol = tab.shape[1]
    cdef Py_ssize_t i, k, cnt = 0
    cdef double p = tab[r, j], f
    for k in range(ncol):
        if tab[r, k] != 0.0:
            tab[r, k] /= p
            nz[cnt] = k
            cnt += 1
    tab[r, j] = 1.0
    for i in range(nrow):
        if i == r:
            continue
        f = tab[i, j]
        if f == 0.0:
            continue
        for k in range(cnt):
            tab[i, nz[k]] -= f * tab[r, nz[k]]
        tab[i, j] = 0.0
    basis[r - 1] = j
    return 0


def pivot(double[:, ::1] tab, Py_ssize_t[::1] basis, Py_ssize_t r, Py_ssize_t j):
    """Pivot on ``tab[r, j]`` (``r >= 1``) and record ``j`` as basic in row ``r``."""
    cdef Py_ssize_t* nz = <Py_ssize_t*> malloc(tab.shape[1] * sizeof(Py_ssize_t))
    if nz == NULL:
        raise MemoryError()
    with nogil:
        _pivot(tab, basis, r, j, nz)
    free(nz)


def simplex_loop(double[:, ::1] tab, Py_ssize_t[::1] basis, Py_ssize_t n_enter,
                 double tol, Py_ssize_t max_iter, Py_ssize_t bland_after,
                 Py_ssize_t degenerate=0):
    """Run primal simplex pivots until optimality.

    Only columns ``< n_enter`` may enter.  Dantzig's rule is used until
    ``bland_after`` degenerate pivots have occurred, then Bland's rule.
    Returns ``(status, iterations, degenerate)`` with status 0 optimal,
    1 unbounded, 2 iteration limit.
    """
    cdef Py_ssize_t nrow = tab.shape[0], ncol = tab.shape[1]
    cdef Py_ssize_t rhs = ncol - 1
    cdef Py_ssize_t it = 0, i, j, k, r
    cdef int status = 2
    cdef double best, ratio, a, b
    cdef Py_ssize_t* nz = <Py_ssize_t*> malloc(ncol * sizeof(Py_ssize_t))
    if nz == NULL:
        raise MemoryError()
    with nogil:
        while it < max_iter:
            j = -1
            if degenerate < bland_after:
                best = -tol
                for k in range(n_enter):
                    if tab[0, k] < best:
                        best = tab[0, k]
                        j = k
            else:
                for k in range(n_enter):
                    if tab[0, k] < -tol:
                        j = k
                        break
            if j < 0:
                status = 0
                break
            r = -1
            best = 0.0
            for i in range(1, nrow):
                a = tab[i, j]
                if a > tol:
                    b = tab[i, rhs]
                    if b < 0.0:
                        b = 0.0
                    ratio = b / a
                    if r < 0 or ratio < best:
                        r = i
                        best = ratio
            if r >= 0:
                # among near-ties prefer the smallest basic index
                for i in range(1, nrow):
                    a = tab[i, j]
                    if a > tol and basis[i - 1] < basis[r - 1]:
                        b = tab[i, rhs]
                        if b < 0.0:
                            b = 0.0
                        if b / a <= best + 1e-12:
                            r = i
            if r < 0:
                status = 1
                break
            if best <= tol:
                degenerate += 1
            _pivot(tab, basis, r, j, nz)
            it += 1
    free(nz)
    return status, it, degenerate
