"""Sanity checks for the test-side simplex oracle itself.

The oracle must agree with an unrelated mature LP solver before it can anchor
the solver suite.
"""

import numpy as np
import pytest
from scipy.optimize import linprog

from lp_oracle import OracleInfeasible, solve_dantzig_lp, solve_inequality_lp


def test_known_tiny_lp():
    # min -x - y  s.t.  x + y <= 1, x <= 0.75, y free in [-inf, inf] but bounded
    # by the first row; optimum at x + y = 1 -> objective -1.
    c = np.array([-1.0, -1.0])
    G = np.array([[1.0, 1.0], [1.0, 0.0], [-1.0, 0.0], [0.0, -1.0]])
    h = np.array([1.0, 0.75, 0.0, 0.0])
    v, obj = solve_inequality_lp(c, G, h)
    assert obj == pytest.approx(-1.0, abs=1e-9)
    assert v[0] + v[1] == pytest.approx(1.0, abs=1e-9)


def test_infeasible_detected():
    G = np.array([[1.0], [-1.0]])
    h = np.array([-1.0, -1.0])  # x <= -1 and x >= 1
    with pytest.raises(OracleInfeasible):
        solve_inequality_lp(np.array([1.0]), G, h)


@pytest.mark.parametrize("seed", range(30))
def test_matches_scipy_linprog(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 10))
    n = int(rng.integers(2, 9))
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m)
    lam = float(rng.choice([0.01, 0.1, 1.0]))

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
    ref = linprog(c, A_ub=G, b_ub=h, bounds=(None, None), method="highs")

    try:
        x, obj = solve_dantzig_lp(A, b, lam)
    except OracleInfeasible:
        assert ref.status == 2
        return
    assert ref.status == 0
    assert np.max(np.abs(A @ x - b)) <= lam + 1e-7
    assert obj == pytest.approx(np.abs(x).sum(), abs=1e-9)
    assert obj == pytest.approx(ref.fun, abs=1e-7 * (1.0 + abs(ref.fun)))
