"""Solver checks against an independent simplex oracle and explicit matrices."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lp_oracle import OracleInfeasible, solve_dantzig_lp
from sdar.core import SolverConfig
from sdar.solver import (
    DenseOperator,
    InfeasibleError,
    SolveReport,
    matrix_operator,
    solve_l1_dantzig,
    sylvester_operator,
)


def _feasible_instance(rng, n, m, lam):
    """Random instance with a guaranteed strictly feasible point."""
    a = rng.standard_normal((m, n))
    x_star = rng.standard_normal(n) * (rng.random(n) < 0.6)
    zeta = rng.uniform(-0.9 * lam, 0.9 * lam, size=m)
    b = a @ x_star - zeta
    return a, b, x_star


class TestAgainstSimplexOracle:
    @pytest.mark.parametrize("seed", range(25))
    def test_objective_matches_oracle(self, seed):
        rng = np.random.default_rng([7, seed])
        n = int(rng.integers(2, 10))
        m = int(rng.integers(2, 10))
        lam = float(rng.uniform(0.05, 1.0))
        a, b, _ = _feasible_instance(rng, n, m, lam)

        ref_x, ref_obj = solve_dantzig_lp(a, b, lam)
        report = solve_l1_dantzig(DenseOperator(a), b, SolverConfig(lam=lam))

        assert report.converged
        assert report.max_constraint_violation <= lam * (1.0 + 1e-6)
        assert report.objective == pytest.approx(ref_obj, rel=1e-6, abs=1e-6)
        # not below the certified optimum (up to solver tolerance)
        assert report.objective >= ref_obj - 1e-6 * (1.0 + ref_obj)

    @pytest.mark.parametrize("seed", range(10))
    def test_equality_mode_matches_oracle(self, seed):
        rng = np.random.default_rng([11, seed])
        n = int(rng.integers(4, 9))
        m = int(rng.integers(2, n))  # underdetermined, consistent by design
        a = rng.standard_normal((m, n))
        x_star = rng.standard_normal(n) * (rng.random(n) < 0.7)
        b = a @ x_star

        ref_x, ref_obj = solve_dantzig_lp(a, b, 0.0)
        report = solve_l1_dantzig(DenseOperator(a), b, SolverConfig(lam=0.0))

        assert report.converged
        assert report.max_constraint_violation <= 1e-8 * (1.0 + np.abs(b).max())
        assert report.objective == pytest.approx(ref_obj, rel=1e-6, abs=1e-6)


def test_soft_threshold_case():
    # identity operator: the solution is coordinatewise shrinkage of b
    b = np.array([2.0, 0.2, -1.1])
    lam = 0.5
    report = solve_l1_dantzig(DenseOperator(np.eye(3)), b, SolverConfig(lam=lam))
    expected = np.sign(b) * np.maximum(np.abs(b) - lam, 0.0)
    assert report.converged
    np.testing.assert_allclose(report.solution, expected, atol=1e-6)


def test_zero_shortcut_is_exact():
    b = np.array([0.3, -0.2, 0.1])
    report = solve_l1_dantzig(DenseOperator(np.eye(3)), b, SolverConfig(lam=0.30001))
    assert report.converged
    assert report.iterations == 0
    assert report.duality_gap == 0.0
    assert np.array_equal(report.solution, np.zeros(3))
    # boundary case ||b||_inf == lam included
    report = solve_l1_dantzig(DenseOperator(np.eye(3)), b, SolverConfig(lam=0.3))
    assert np.array_equal(report.solution, np.zeros(3))


def test_infeasible_raises():
    a = np.array([[1.0], [1.0]])
    b = np.array([1.0, -1.0])
    with pytest.raises(InfeasibleError):
        solve_l1_dantzig(DenseOperator(a), b, SolverConfig(lam=0.1))
    with pytest.raises(InfeasibleError):
        solve_l1_dantzig(DenseOperator(a), b, SolverConfig(lam=0.0))


def test_oracle_agrees_on_infeasibility():
    a = np.array([[1.0], [1.0]])
    b = np.array([1.0, -1.0])
    with pytest.raises(OracleInfeasible):
        solve_dantzig_lp(a, b, 0.1)


def test_determinism_bit_identical():
    rng = np.random.default_rng([13, 0])
    a, b, _ = _feasible_instance(rng, 8, 6, 0.2)
    cfg = SolverConfig(lam=0.2)
    first = solve_l1_dantzig(DenseOperator(a), b, cfg)
    second = solve_l1_dantzig(DenseOperator(a), b, cfg)
    assert np.array_equal(first.solution, second.solution)
    assert first.objective == second.objective
    assert first.duality_gap == second.duality_gap
    assert first.iterations == second.iterations


def test_report_fields_are_consistent():
    rng = np.random.default_rng([17, 0])
    a, b, _ = _feasible_instance(rng, 7, 5, 0.3)
    report = solve_l1_dantzig(DenseOperator(a), b, SolverConfig(lam=0.3))
    assert isinstance(report, SolveReport)
    assert report.objective == float(np.abs(report.solution).sum())
    recomputed = float(np.max(np.abs(a @ report.solution - b)))
    assert report.max_constraint_violation == pytest.approx(recomputed, abs=1e-14)


class TestSylvesterOperator:
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_explicit_kronecker(self, seed):
        rng = np.random.default_rng([19, seed])
        p = int(rng.integers(2, 6))
        s1 = rng.standard_normal((p, p))
        s1 = s1 @ s1.T + np.eye(p)
        s2 = rng.standard_normal((p, p))
        s2 = s2 @ s2.T + np.eye(p)
        op = sylvester_operator(s1, s2)
        k = 0.5 * (np.kron(s1, s2) + np.kron(s2, s1))

        v = rng.standard_normal(p * p)
        np.testing.assert_allclose(op.apply(v), k @ v, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(op.apply_adjoint(v), k.T @ v, rtol=1e-12, atol=1e-12)

        w = rng.random(p * p)
        expected_diag = np.einsum("ji,j,ji->i", k, w, k)
        np.testing.assert_allclose(op.adjoint_sq_diag(w), expected_diag, rtol=1e-10)

    def test_full_solve_matches_dense_path(self):
        rng = np.random.default_rng([23, 0])
        p = 3
        s1 = rng.standard_normal((p, p))
        s1 = s1 @ s1.T + np.eye(p)
        s2 = rng.standard_normal((p, p))
        s2 = s2 @ s2.T + np.eye(p)
        op = sylvester_operator(s1, s2)
        k = 0.5 * (np.kron(s1, s2) + np.kron(s2, s1))

        d_star = np.zeros((p, p))
        d_star[0, 1] = d_star[1, 0] = 0.8
        lam = 0.25
        b = k @ d_star.reshape(-1) - 0.5 * lam

        report = solve_l1_dantzig(op, b, SolverConfig(lam=lam))
        _, ref_obj = solve_dantzig_lp(k, b, lam)
        assert report.converged
        assert report.objective == pytest.approx(ref_obj, rel=1e-6, abs=1e-6)


def test_matrix_operator_is_symmetric_multiply():
    rng = np.random.default_rng([29, 0])
    p = 5
    s = rng.standard_normal((p, p))
    s = s @ s.T
    op = matrix_operator(s)
    v = rng.standard_normal(p)
    np.testing.assert_allclose(op.apply(v), s @ v, rtol=1e-14)
    np.testing.assert_allclose(op.apply_adjoint(v), s @ v, rtol=1e-14)


@given(
    n=st.integers(min_value=1, max_value=5),
    m=st.integers(min_value=1, max_value=5),
    seed=st.integers(min_value=0, max_value=10_000),
)
@settings(max_examples=40, deadline=None)
def test_adjoint_identity_holds(n, m, seed):
    rng = np.random.default_rng([31, seed])
    a = rng.standard_normal((m, n))
    op = DenseOperator(a)
    v = rng.standard_normal(n)
    w = rng.standard_normal(m)
    assert op.apply(v) @ w == pytest.approx(v @ op.apply_adjoint(w), rel=1e-10, abs=1e-10)


@given(seed=st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_feasible_solves_never_exceed_witness_objective(seed):
    rng = np.random.default_rng([37, seed])
    n = int(rng.integers(1, 7))
    m = int(rng.integers(1, 7))
    lam = float(rng.uniform(0.05, 2.0))
    a, b, x_star = _feasible_instance(rng, n, m, lam)
    report = solve_l1_dantzig(DenseOperator(a), b, SolverConfig(lam=lam))
    assert report.converged
    assert report.max_constraint_violation <= lam * (1.0 + 1e-6)
    witness = float(np.abs(x_star).sum())
    assert report.objective <= witness + 1e-5 * (1.0 + witness)
