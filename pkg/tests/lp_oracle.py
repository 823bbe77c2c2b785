"""Independent dense LP oracle for solver tests.

A from-scratch two-phase tableau simplex with Bland's rule, written without
reference to the package under test.  Only suitable for the tiny instances the
tests use (tens of variables); correctness over speed throughout.
"""

from __future__ import annotations

import numpy as np

_TOL = 1e-9


class OracleInfeasible(Exception):
    pass


class OracleUnbounded(Exception):
    pass


def _pivot(tableau, basis, row, col):
    tableau[row] /= tableau[row, col]
    for i in range(tableau.shape[0]):
        if i != row and tableau[i, col] != 0.0:
            tableau[i] -= tableau[i, col] * tableau[row]
    basis[row] = col


def _simplex(tableau, basis, cost, max_iters=20000):
    """Minimize cost over the canonical tableau in place (Bland's rule)."""
    m = tableau.shape[0]
    for _ in range(max_iters):
        # reduced costs r_j = c_j - c_B' B^-1 a_j over the canonical tableau
        cb = cost[basis]
        reduced = cost[:-1] - cb @ tableau[:, :-1]
        entering = -1
        for j in range(reduced.shape[0]):
            if reduced[j] < -_TOL:
                entering = j
                break
        if entering < 0:
            return
        ratio = np.inf
        leaving = -1
        for i in range(m):
            a = tableau[i, entering]
            if a > _TOL:
                r = tableau[i, -1] / a
                if r < ratio - _TOL or (abs(r - ratio) <= _TOL and (leaving < 0 or basis[i] < basis[leaving])):
                    ratio = r
                    leaving = i
        if leaving < 0:
            raise OracleUnbounded("LP is unbounded")
        _pivot(tableau, basis, leaving, entering)
    raise RuntimeError("simplex iteration cap hit")


def solve_inequality_lp(c, G, h):
    """min c'v  s.t.  G v <= h,  v free.  Returns (v, objective).

    Raises OracleInfeasible / OracleUnbounded.
    """
    c = np.asarray(c, dtype=float).ravel()
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float).ravel()
    m, n = G.shape

    # standard form columns: [v+, v-, slack]; rows G v+ - G v- + s = h
    A = np.hstack([G, -G, np.eye(m)])
    b = h.copy()
    cost = np.concatenate([c, -c, np.zeros(m)])
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    n_cols = A.shape[1]
    # phase 1: artificial basis
    tableau = np.hstack([A, np.eye(m), b[:, None]])
    basis = list(range(n_cols, n_cols + m))
    phase1_cost = np.concatenate([np.zeros(n_cols), np.ones(m), [0.0]])
    _simplex(tableau, basis, phase1_cost)
    cb = phase1_cost[basis]
    if cb @ tableau[:, -1] > 1e-7:
        raise OracleInfeasible("phase 1 optimum is positive")

    # drive residual artificials out of the basis (or drop redundant rows)
    keep = []
    for i in range(m):
        if basis[i] >= n_cols:
            pivot_col = -1
            for j in range(n_cols):
                if abs(tableau[i, j]) > _TOL:
                    pivot_col = j
                    break
            if pivot_col >= 0:
                _pivot(tableau, basis, i, pivot_col)
                keep.append(i)
            # else: redundant row, drop
        else:
            keep.append(i)
    tableau = tableau[keep]
    basis = [basis[i] for i in keep]

    # phase 2 on the real cost, artificial columns removed
    tableau = np.hstack([tableau[:, :n_cols], tableau[:, -1:]])
    phase2_cost = np.concatenate([cost, [0.0]])
    _simplex(tableau, basis, phase2_cost)

    solution = np.zeros(n_cols)
    for i, j in enumerate(basis):
        solution[j] = tableau[i, -1]
    v = solution[:n] - solution[n : 2 * n]
    return v, float(cost @ solution)


def solve_dantzig_lp(A, b, lam):
    """min ||x||_1  s.t.  ||A x - b||_inf <= lam, via the simplex oracle.

    Returns (x, objective).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    m, n = A.shape
    # variables v = (x, t): min sum t  s.t.  x - t <= 0, -x - t <= 0,
    # A x <= b + lam, -A x <= lam - b
    c = np.concatenate([np.zeros(n), np.ones(n)])
    eye = np.eye(n)
    zero = np.zeros((m, n))
    G = np.vstack(
        [
            np.hstack([eye, -eye]),
            np.hstack([-eye, -eye]),
            np.hstack([A, zero]),
            np.hstack([-A, zero]),
        ]
    )
    h = np.concatenate([np.zeros(2 * n), b + lam, lam - b])
    v, obj = solve_inequality_lp(c, G, h)
    return v[:n], obj
