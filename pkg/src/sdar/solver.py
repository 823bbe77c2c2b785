"""l1 minimization under sup-norm constraints, with matrix-free operators.

The central problem is

    minimize ||x||_1   subject to   ||A x - b||_inf <= lam          (lam > 0)
    minimize ||x||_1   subject to   A x = b                         (lam = 0)

where A is a linear map given only through ``apply`` / ``apply_adjoint``.
Both are linear programs; they are solved with a primal-dual interior-point
method whose Newton systems are reduced to symmetric positive definite form
and solved by preconditioned conjugate gradients, so the operator is never
materialized.

Equivalent LP (lam > 0):  minimize sum(t)  over (x, t)  subject to
    x - t <= 0,   -x - t <= 0,   A x - b <= lam,   -(A x - b) <= lam.

When ``||b||_inf <= lam`` the zero vector is feasible and optimal, and is
returned exactly without iterating.  Otherwise a phase-1 program
(minimize s subject to |A x - b| <= lam + s) produces a strictly interior
starting point or certifies infeasibility.

Determinism: no randomness anywhere; identical inputs give bit-identical
reports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sdar.core import (
    NonFiniteError,
    NumericalError,
    SolverConfig,
    ValidationError,
    _check_square_symmetric,
)

# Interior-point constants.  MU drives the surrogate-gap schedule
# (tau = MU * n_constraints / gap each Newton step, i.e. a 10x gap reduction
# target per outer iteration); the others control the backtracking search.
_MU = 10.0
_STEP_SCALE = 0.99
_BACKTRACK = 0.5
_ALPHA = 0.01
_MAX_BACKTRACKS = 48
_FEAS_SLACK = 1e-6  # converged iterates satisfy viol <= lam * (1 + slack)


class InfeasibleError(NumericalError):
    """Phase 1 found no point satisfying the constraint radius.

    The radius is either genuinely too small or numerically out of reach;
    callers running a grid treat both the same way and drop the candidate.
    """


class NumericalBreakdownError(NumericalError):
    """Inner CG solves stagnated; the Newton direction is unusable."""


class ConstraintOperator:
    """Linear map interface used by the solver.

    Subclasses set ``dim_in`` / ``dim_out`` and implement ``apply`` (the map)
    and ``apply_adjoint`` (its transpose).  ``adjoint_sq_diag`` may return
    diag(A' diag(w) A) for the Jacobi preconditioner; returning None falls
    back to the barrier-only diagonal.
    """

    dim_in: int
    dim_out: int

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint_sq_diag(self, weights: np.ndarray) -> np.ndarray | None:
        return None


class DenseOperator(ConstraintOperator):
    """Wraps an explicit matrix (used for the direction program and tests)."""

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ValidationError(f"operator matrix must be 2-D, got {matrix.shape}")
        if not np.isfinite(matrix).all():
            raise NonFiniteError("operator matrix contains non-finite entries")
        self.matrix = matrix
        self.dim_out, self.dim_in = matrix.shape
        self._sq = matrix * matrix

    def apply(self, x):
        return self.matrix @ x

    def apply_adjoint(self, y):
        return self.matrix.T @ y

    def adjoint_sq_diag(self, weights):
        return self._sq.T @ weights


class SylvesterOperator(ConstraintOperator):
    """vec(V) -> vec((S1 V S2 + S2 V S1) / 2) for symmetric S1, S2.

    This is the constraint map of the differential-graph program; it equals
    the symmetric Kronecker matrix (S1 (x) S2 + S2 (x) S1) / 2 acting on the
    row-major vectorization, hence is self-adjoint.
    """

    def __init__(self, sigma1: np.ndarray, sigma2: np.ndarray):
        s1 = _check_square_symmetric(sigma1, "sigma1")
        s2 = _check_square_symmetric(sigma2, "sigma2")
        if s1.shape != s2.shape:
            raise ValidationError("sigma1 and sigma2 must have equal shapes")
        self.p = s1.shape[0]
        self.sigma1 = 0.5 * (s1 + s1.T)
        self.sigma2 = 0.5 * (s2 + s2.T)
        self.dim_in = self.dim_out = self.p * self.p
        # elementwise squares feed the exact constraint-Hessian diagonal
        self._e1 = self.sigma1 * self.sigma1
        self._e2 = self.sigma2 * self.sigma2
        self._e12 = self.sigma1 * self.sigma2

    def apply(self, x):
        v = x.reshape(self.p, self.p)
        out = self.sigma1 @ v @ self.sigma2
        out += self.sigma2 @ v @ self.sigma1
        out *= 0.5
        return out.reshape(-1)

    def apply_adjoint(self, y):
        return self.apply(y)

    def adjoint_sq_diag(self, weights):
        # diag(K' W K) for K = (S1 (x) S2 + S2 (x) S1)/2 expands into three
        # matrix products of elementwise squares.
        w = weights.reshape(self.p, self.p)
        out = self._e1.T @ w @ self._e2
        out += 2.0 * (self._e12.T @ w @ self._e12)
        out += self._e2.T @ w @ self._e1
        out *= 0.25
        return out.reshape(-1)


def sylvester_operator(sigma1: np.ndarray, sigma2: np.ndarray) -> SylvesterOperator:
    """Constraint operator of the differential-graph program."""
    return SylvesterOperator(sigma1, sigma2)


def matrix_operator(sigma: np.ndarray) -> DenseOperator:
    """Constraint operator of the direction program (multiply by sigma)."""
    sig = _check_square_symmetric(sigma, "sigma")
    return DenseOperator(0.5 * (sig + sig.T))


@dataclass
class SolveReport:
    """Outcome of one l1 solve.

    ``objective`` is exactly ``||solution||_1``; ``duality_gap`` is the final
    surrogate gap, which bounds the suboptimality of a converged iterate;
    ``max_constraint_violation`` is ``||A x - b||_inf``.
    """

    solution: np.ndarray
    objective: float
    max_constraint_violation: float
    iterations: int
    converged: bool
    duality_gap: float


def _validate_inputs(op: ConstraintOperator, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64).ravel()
    if b.shape[0] != op.dim_out:
        raise ValidationError(
            f"b has length {b.shape[0]} but operator emits {op.dim_out}"
        )
    if not np.isfinite(b).all():
        raise NonFiniteError("b contains non-finite entries")
    return b


def _pcg(apply_h, rhs, diag_precond, tol, max_iters):
    """Preconditioned CG for SPD systems; returns (x, relative_residual)."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    norm0 = float(np.linalg.norm(rhs))
    if norm0 == 0.0:
        return x, 0.0
    z = r / diag_precond
    p = z.copy()
    rz = float(r @ z)
    best_x, best_res = x.copy(), 1.0
    for _ in range(max_iters):
        hp = apply_h(p)
        denom = float(p @ hp)
        if denom <= 0.0 or not np.isfinite(denom):
            break  # loss of positive definiteness in finite precision
        alpha = rz / denom
        x += alpha * p
        r -= alpha * hp
        res = float(np.linalg.norm(r)) / norm0
        if res < best_res:
            best_res = res
            best_x = x.copy()
        if res <= tol:
            return x, res
        z = r / diag_precond
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return best_x, best_res


def _check_cg(res: float, where: str) -> None:
    if not np.isfinite(res) or res > 0.5:
        raise NumericalBreakdownError(
            f"CG stagnated in {where} (relative residual {res:.2e})"
        )


def solve_l1_dantzig(op: ConstraintOperator, b: np.ndarray, config: SolverConfig) -> SolveReport:
    """Minimize ||x||_1 subject to ||A x - b||_inf <= config.lam.

    Returns a :class:`SolveReport`; ``converged=False`` flags an iterate that
    stopped short of the duality-gap target (iteration cap or stalled line
    search).  Raises :class:`InfeasibleError` when phase 1 cannot locate a
    feasible point and :class:`NumericalBreakdownError` when the inner CG
    solves fail.  The call is deterministic.
    """
    b = _validate_inputs(op, b)
    lam = float(config.lam)

    norm_b = float(np.max(np.abs(b))) if b.size else 0.0
    if norm_b <= lam:
        # zero is feasible, and no feasible point beats objective 0
        return SolveReport(
            solution=np.zeros(op.dim_in),
            objective=0.0,
            max_constraint_violation=norm_b,
            iterations=0,
            converged=True,
            duality_gap=0.0,
        )

    if lam == 0.0:
        return _solve_equality(op, b, config)

    x0 = _phase1(op, b, lam, config)
    return _solve_inequality(op, b, lam, config, x0)


# ---------------------------------------------------------------------------
# lam > 0: primal-dual interior point on the inequality LP
# ---------------------------------------------------------------------------


def _solve_inequality(op, b, lam, config, x0):
    n, m = op.dim_in, op.dim_out
    n_constr = 2 * n + 2 * m

    x = x0.copy()
    r = op.apply(x) - b
    # strict interior in t: a margin above |x| on every coordinate
    t = np.abs(x) * 1.05 + max(0.05 * float(np.max(np.abs(x), initial=0.0)), 1e-2)

    f1 = x - t
    f2 = -x - t
    f3 = r - lam
    f4 = -r - lam
    if max(f3.max(), f4.max()) >= 0.0:
        raise InfeasibleError("phase 1 returned a point without strict interior")
    m1, m2, m3, m4 = -1.0 / f1, -1.0 / f2, -1.0 / f3, -1.0 / f4

    converged = False
    gap = np.inf
    iters = 0
    for iters in range(1, config.max_outer_iters + 1):
        gap = -(m1 @ f1 + m2 @ f2 + m3 @ f3 + m4 @ f4)
        viol = float(np.max(np.abs(r)))
        if gap <= config.duality_gap_tol and viol <= lam * (1.0 + _FEAS_SLACK):
            converged = True
            break
        tau = _MU * n_constr / gap

        sig1, sig2 = -m1 / f1, -m2 / f2
        sig3, sig4 = -m3 / f3, -m4 / f4
        d1 = sig1 + sig2
        d2 = sig1 - sig2
        s34 = sig3 + sig4
        # cancellation-free form of d1 - d2^2/d1, floored against underflow
        dd = np.maximum(4.0 * sig1 * sig2 / d1, 1e-250)

        w1 = (1.0 / tau) * (1.0 / f1 - 1.0 / f2 + op.apply_adjoint(1.0 / f3 - 1.0 / f4))
        w2 = -1.0 - (1.0 / tau) * (1.0 / f1 + 1.0 / f2)
        rhs = w1 + (d2 / d1) * w2

        def apply_h(v):
            return op.apply_adjoint(s34 * op.apply(v)) + dd * v

        diag = op.adjoint_sq_diag(s34)
        precond = dd + diag if diag is not None else dd
        dx, res = _pcg(apply_h, rhs, precond, config.cg_tol, config.cg_max_iters)
        _check_cg(res, "the Newton step")
        dt = (w2 + d2 * dx) / d1

        adx = op.apply(dx)
        dm1 = sig1 * (dx - dt) - m1 - 1.0 / (tau * f1)
        dm2 = sig2 * (-dx - dt) - m2 - 1.0 / (tau * f2)
        dm3 = sig3 * adx - m3 - 1.0 / (tau * f3)
        dm4 = sig4 * (-adx) - m4 - 1.0 / (tau * f4)

        # largest dual-feasible step
        step = 1.0
        for mm, dm in ((m1, dm1), (m2, dm2), (m3, dm3), (m4, dm4)):
            neg = dm < 0.0
            if neg.any():
                step = min(step, float(np.min(-mm[neg] / dm[neg])))
        step *= _STEP_SCALE

        res_norm = _residual_norm_ineq(op, b, lam, m1, m2, m3, m4, f1, f2, f3, f4, tau)
        ok = False
        for _ in range(_MAX_BACKTRACKS):
            x_n = x + step * dx
            t_n = t + step * dt
            r_n = r + step * adx
            f1_n = x_n - t_n
            f2_n = -x_n - t_n
            f3_n = r_n - lam
            f4_n = -r_n - lam
            if max(f1_n.max(), f2_n.max(), f3_n.max(), f4_n.max()) < 0.0:
                m1_n = m1 + step * dm1
                m2_n = m2 + step * dm2
                m3_n = m3 + step * dm3
                m4_n = m4 + step * dm4
                new_norm = _residual_norm_ineq(
                    op, b, lam, m1_n, m2_n, m3_n, m4_n, f1_n, f2_n, f3_n, f4_n, tau
                )
                if new_norm <= (1.0 - _ALPHA * step) * res_norm:
                    ok = True
                    break
            step *= _BACKTRACK
        if not ok:
            break  # stalled; report the best iterate honestly

        x, t, r = x_n, t_n, r_n
        f1, f2, f3, f4 = f1_n, f2_n, f3_n, f4_n
        m1, m2, m3, m4 = m1_n, m2_n, m3_n, m4_n

    gap = -(m1 @ f1 + m2 @ f2 + m3 @ f3 + m4 @ f4)
    if gap <= config.duality_gap_tol and float(np.max(np.abs(r))) <= lam * (1.0 + _FEAS_SLACK):
        converged = True
    return SolveReport(
        solution=x,
        objective=float(np.abs(x).sum()),
        max_constraint_violation=float(np.max(np.abs(r))),
        iterations=iters,
        converged=converged,
        duality_gap=float(gap),
    )


def _residual_norm_ineq(op, b, lam, m1, m2, m3, m4, f1, f2, f3, f4, tau):
    r_dual_x = (m1 - m2) + op.apply_adjoint(m3 - m4)
    r_dual_t = 1.0 - m1 - m2
    r_cent = np.concatenate([-m1 * f1, -m2 * f2, -m3 * f3, -m4 * f4]) - 1.0 / tau
    return float(np.sqrt(
        np.linalg.norm(r_dual_x) ** 2
        + np.linalg.norm(r_dual_t) ** 2
        + np.linalg.norm(r_cent) ** 2
    ))


# ---------------------------------------------------------------------------
# phase 1: minimize s subject to |A x - b| <= lam + s
# ---------------------------------------------------------------------------


def _phase1(op, b, lam, config):
    """Return x with ||A x - b||_inf < lam, or raise InfeasibleError.

    The auxiliary LP is feasible by construction (s large enough always
    works) and bounded below by -lam, so the interior-point iteration is well
    posed.  The loop exits early once the violation is strictly inside lam.
    """
    n, m = op.dim_in, op.dim_out
    n_constr = 2 * m

    x = np.zeros(n)
    r = -b.copy()
    viol = float(np.max(np.abs(r)))
    s = viol - lam + 0.1 * (viol + 1.0)

    g3 = r - lam - s
    g4 = -r - lam - s
    m3, m4 = -1.0 / g3, -1.0 / g4

    # exit as soon as the iterate is comfortably interior; the full optimum
    # is only needed to decide feasibility, so the gap test is lam-scaled
    target = 0.9 * lam
    gap_tol = max(config.duality_gap_tol, 1e-3 * lam)
    for _ in range(config.max_outer_iters):
        if float(np.max(np.abs(r))) <= target:
            return x
        gap = -(m3 @ g3 + m4 @ g4)
        if gap <= gap_tol:
            break
        tau = _MU * n_constr / gap

        sig3, sig4 = -m3 / g3, -m4 / g4
        s34 = sig3 + sig4
        q = sig3 - sig4
        qq = float(np.sum(s34))

        u1 = (1.0 / tau) * op.apply_adjoint(1.0 / g3 - 1.0 / g4)
        u2 = -1.0 - (1.0 / tau) * float(np.sum(1.0 / g3 + 1.0 / g4))

        # SPD system in (dx, ds):  [A'S A, -A'q; -q'A, sum(S)]
        def apply_h(v):
            vx, vs = v[:n], v[n]
            top = op.apply_adjoint(s34 * op.apply(vx)) - op.apply_adjoint(q) * vs
            bottom = -float(q @ op.apply(vx)) + qq * vs
            return np.concatenate([top, [bottom]])

        diag = op.adjoint_sq_diag(s34)
        if diag is None:
            diag = np.full(n, max(qq / max(m, 1), 1e-12))
        precond = np.concatenate([np.maximum(diag, 1e-12), [qq]])
        rhs = np.concatenate([u1, [u2]])
        d, res = _pcg(apply_h, rhs, precond, config.cg_tol, config.cg_max_iters)
        _check_cg(res, "phase 1")
        dx, ds = d[:n], float(d[n])

        adx = op.apply(dx)
        dm3 = sig3 * (adx - ds) - m3 - 1.0 / (tau * g3)
        dm4 = sig4 * (-adx - ds) - m4 - 1.0 / (tau * g4)

        step = 1.0
        for mm, dm in ((m3, dm3), (m4, dm4)):
            neg = dm < 0.0
            if neg.any():
                step = min(step, float(np.min(-mm[neg] / dm[neg])))
        step *= _STEP_SCALE

        ok = False
        for _ in range(_MAX_BACKTRACKS):
            x_n = x + step * dx
            s_n = s + step * ds
            r_n = r + step * adx
            g3_n = r_n - lam - s_n
            g4_n = -r_n - lam - s_n
            if max(g3_n.max(), g4_n.max()) < 0.0:
                ok = True
                break
            step *= _BACKTRACK
        if not ok:
            break

        x, s, r = x_n, s_n, r_n
        g3, g4 = g3_n, g4_n
        m3 = m3 + step * dm3
        m4 = m4 + step * dm4

    if float(np.max(np.abs(r))) < lam:
        return x
    raise InfeasibleError(
        f"no point found satisfying the constraint radius {lam:.6g} "
        f"(best violation {float(np.max(np.abs(r))):.6g})"
    )


# ---------------------------------------------------------------------------
# lam = 0: equality-constrained variant, minimize ||x||_1 s.t. A x = b
# ---------------------------------------------------------------------------


def _cgls(op, b, tol, max_iters):
    """Min-norm least-squares solution of A x = b by CG on the normal equations."""
    x = np.zeros(op.dim_in)
    r = b.copy()
    s = op.apply_adjoint(r)
    p = s.copy()
    gamma = float(s @ s)
    norm_b = float(np.linalg.norm(b))
    for _ in range(max_iters):
        q = op.apply(p)
        denom = float(q @ q)
        if denom <= 0.0 or not np.isfinite(denom):
            break
        alpha = gamma / denom
        x += alpha * p
        r -= alpha * q
        if float(np.linalg.norm(r)) <= tol * norm_b:
            break
        s = op.apply_adjoint(r)
        gamma_new = float(s @ s)
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    return x, r


def _solve_equality(op, b, config):
    n, m = op.dim_in, op.dim_out
    n_constr = 2 * n
    feas_tol = 1e-9 * (1.0 + float(np.max(np.abs(b))))

    x, resid = _cgls(op, b, 1e-12, max(op.dim_in * 4, 200))
    if float(np.max(np.abs(resid))) > max(feas_tol * 10.0, 1e-8):
        raise InfeasibleError(
            "equality system A x = b is inconsistent "
            f"(best violation {float(np.max(np.abs(resid))):.3e})"
        )

    t = np.abs(x) * 1.05 + max(0.05 * float(np.max(np.abs(x), initial=0.0)), 1e-2)
    f1 = x - t
    f2 = -x - t
    m1, m2 = -1.0 / f1, -1.0 / f2
    nu = np.zeros(m)

    converged = False
    gap = np.inf
    iters = 0
    for iters in range(1, config.max_outer_iters + 1):
        r_pri = op.apply(x) - b
        gap = -(m1 @ f1 + m2 @ f2)
        if gap <= config.duality_gap_tol and float(np.max(np.abs(r_pri))) <= feas_tol:
            converged = True
            break
        tau = _MU * n_constr / gap

        sig1, sig2 = -m1 / f1, -m2 / f2
        d1 = sig1 + sig2
        d2 = sig1 - sig2
        # cancellation-free form of d1 - d2^2/d1, floored against underflow
        dd = np.maximum(4.0 * sig1 * sig2 / d1, 1e-250)

        w1 = (1.0 / tau) * (1.0 / f1 - 1.0 / f2) - op.apply_adjoint(nu)
        w2 = -1.0 - (1.0 / tau) * (1.0 / f1 + 1.0 / f2)
        w3 = w1 + (d2 / d1) * w2

        # Schur complement in the equality multipliers: A dd^-1 A' dnu = rhs
        def apply_h(v):
            return op.apply(op.apply_adjoint(v) / dd)

        rhs = op.apply(w3 / dd) - (b - op.apply(x))
        # no cheap exact diagonal for A dd^-1 A'; run CG unpreconditioned
        dnu, res = _pcg(apply_h, rhs, np.ones(m), config.cg_tol, config.cg_max_iters)
        _check_cg(res, "the equality Newton step")

        dx = (w3 - op.apply_adjoint(dnu)) / dd
        dt = (w2 + d2 * dx) / d1
        dm1 = sig1 * (dx - dt) - m1 - 1.0 / (tau * f1)
        dm2 = sig2 * (-dx - dt) - m2 - 1.0 / (tau * f2)

        step = 1.0
        for mm, dm in ((m1, dm1), (m2, dm2)):
            neg = dm < 0.0
            if neg.any():
                step = min(step, float(np.min(-mm[neg] / dm[neg])))
        step *= _STEP_SCALE

        res_norm = _residual_norm_eq(op, b, m1, m2, f1, f2, nu, x, tau)
        ok = False
        for _ in range(_MAX_BACKTRACKS):
            x_n = x + step * dx
            t_n = t + step * dt
            f1_n = x_n - t_n
            f2_n = -x_n - t_n
            if max(f1_n.max(), f2_n.max()) < 0.0:
                m1_n = m1 + step * dm1
                m2_n = m2 + step * dm2
                nu_n = nu + step * dnu
                new_norm = _residual_norm_eq(op, b, m1_n, m2_n, f1_n, f2_n, nu_n, x_n, tau)
                if new_norm <= (1.0 - _ALPHA * step) * res_norm:
                    ok = True
                    break
            step *= _BACKTRACK
        if not ok:
            break

        x, t = x_n, t_n
        f1, f2 = f1_n, f2_n
        m1, m2, nu = m1_n, m2_n, nu_n

    r_pri = op.apply(x) - b
    gap = -(m1 @ f1 + m2 @ f2)
    if gap <= config.duality_gap_tol and float(np.max(np.abs(r_pri))) <= feas_tol:
        converged = True
    return SolveReport(
        solution=x,
        objective=float(np.abs(x).sum()),
        max_constraint_violation=float(np.max(np.abs(r_pri))),
        iterations=iters,
        converged=converged,
        duality_gap=float(gap),
    )


def _residual_norm_eq(op, b, m1, m2, f1, f2, nu, x, tau):
    r_dual_x = (m1 - m2) + op.apply_adjoint(nu)
    r_dual_t = 1.0 - m1 - m2
    r_cent = np.concatenate([-m1 * f1, -m2 * f2]) - 1.0 / tau
    r_pri = op.apply(x) - b
    return float(np.sqrt(
        np.linalg.norm(r_dual_x) ** 2
        + np.linalg.norm(r_dual_t) ** 2
        + np.linalg.norm(r_cent) ** 2
        + np.linalg.norm(r_pri) ** 2
    ))
