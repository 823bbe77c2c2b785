"""Direct estimation of the differential graph and discriminating direction.

Given two-class data, the parameters of the quadratic rule are estimated
without inverting any covariance matrix:

    D_hat    = argmin |D|_1    s.t.  | (S1 D S2 + S2 D S1)/2 - S1 + S2 |_inf <= lambda1
    beta_hat = argmin ||b||_1  s.t.  || S2 b - (mu2_hat - mu1_hat) ||_inf   <= lambda2

where S_k are the 1/n_k-divisor sample covariances.  Both feasible sets
contain the population targets D = Omega2 - Omega1 and beta = Omega2 delta
with high probability once lambda_i ~ sqrt(log p / n), which is the scaling
used for the defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from sdar.core import (
    ClassMoments,
    LabeledDataset,
    SdarModel,
    SolverConfig,
    TooFewSamplesError,
    UnknownClassError,
    ValidationError,
    ensure_valid_dataset,
)
from sdar.solver import SolveReport, matrix_operator, solve_l1_dantzig, sylvester_operator


@dataclass(frozen=True)
class FitConfig:
    """Constraint radii for the two estimation programs plus solver knobs."""

    lambda1: float
    lambda2: float
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        for name, value in (("lambda1", self.lambda1), ("lambda2", self.lambda2)):
            if not (np.isfinite(value) and value >= 0.0):
                raise ValidationError(f"{name} must be finite and >= 0, got {value!r}")


def default_scale(p: int, n1: int, n2: int) -> float:
    """sqrt(log p / n) with n = min(n1, n2), the radius unit of both programs.

    p = 1 gives 0, which routes the solver to its exact equality path.
    """
    n = min(int(n1), int(n2))
    if n < 1 or p < 1:
        raise ValidationError("need p >= 1 and both classes non-empty")
    return math.sqrt(math.log(p) / n)


def default_fit_config(
    p: int,
    n1: int,
    n2: int,
    c1: float = 2.0,
    c2: float = 2.0,
    solver: SolverConfig | None = None,
) -> FitConfig:
    """Heuristic radii lambda_i = c_i sqrt(log p / n); tuning should override."""
    scale = default_scale(p, n1, n2)
    return FitConfig(
        lambda1=c1 * scale,
        lambda2=c2 * scale,
        solver=solver if solver is not None else SolverConfig(),
    )


def class_moments(data: LabeledDataset, class_id: int) -> ClassMoments:
    """Mean, 1/n_k covariance, and prior share of one class.

    Raises UnknownClassError when the class id has no rows and
    TooFewSamplesError when it has only one (the covariance needs two).
    """
    class_id = int(class_id)
    mask = data.labels == class_id
    n_k = int(mask.sum())
    if n_k == 0:
        raise UnknownClassError(f"class {class_id} has no rows")
    if n_k < 2:
        raise TooFewSamplesError(f"class {class_id} has a single row; need n_k >= 2")
    rows = data.features[mask]
    mu = rows.mean(axis=0)
    centered = rows - mu
    sigma = centered.T @ centered / n_k
    return ClassMoments(n_k=n_k, mu_hat=mu, sigma_hat=sigma, pi_hat=n_k / data.n)


def _check_pair(m1: ClassMoments, m2: ClassMoments) -> None:
    if m1.p != m2.p:
        raise ValidationError(f"moment dimensions disagree: {m1.p} vs {m2.p}")


def solve_graph_program(
    sigma1: np.ndarray, sigma2: np.ndarray, cfg: FitConfig
) -> tuple[np.ndarray, SolveReport]:
    """Differential-graph program on raw symmetric matrices.

    Accepts any symmetric inputs (the program itself never factorizes them),
    which the rank-based pipeline relies on: its correlation estimates can be
    slightly indefinite.  The raw interior-point solution is symmetrized,
    which preserves feasibility (the constraint map and target are invariant
    under transposition) and cannot increase the l1 objective.
    """
    p = sigma1.shape[0]
    op = sylvester_operator(sigma1, sigma2)
    b = (sigma1 - sigma2).reshape(-1)
    report = solve_l1_dantzig(op, b, cfg.solver.with_lam(cfg.lambda1))
    d_raw = report.solution.reshape(p, p)
    d_hat = 0.5 * (d_raw + d_raw.T)
    return d_hat, report


def solve_direction_program(
    sigma2: np.ndarray, delta: np.ndarray, cfg: FitConfig
) -> tuple[np.ndarray, SolveReport]:
    """Discriminating-direction program on a raw matrix and mean difference."""
    op = matrix_operator(sigma2)
    report = solve_l1_dantzig(op, np.asarray(delta, dtype=np.float64), cfg.solver.with_lam(cfg.lambda2))
    return report.solution.copy(), report


def estimate_differential_graph(
    m1: ClassMoments, m2: ClassMoments, cfg: FitConfig
) -> tuple[np.ndarray, SolveReport]:
    """Solve the differential-graph program; returns (D_hat, report)."""
    _check_pair(m1, m2)
    return solve_graph_program(m1.sigma_hat, m2.sigma_hat, cfg)


def estimate_direction(
    m1: ClassMoments, m2: ClassMoments, cfg: FitConfig
) -> tuple[np.ndarray, SolveReport]:
    """Solve the discriminating-direction program; returns (beta_hat, report)."""
    _check_pair(m1, m2)
    return solve_direction_program(m2.sigma_hat, m2.mu_hat - m1.mu_hat, cfg)


def sdar_from_solutions(
    m1: ClassMoments,
    m2: ClassMoments,
    d_hat: np.ndarray,
    beta_hat: np.ndarray,
    lambda1: float,
    lambda2: float,
) -> SdarModel:
    """Assemble the fitted rule from precomputed program solutions.

    Lets grid tuning reuse a cached D_hat across every lambda2 candidate
    (and vice versa) instead of re-solving the full pair for each cell.
    """
    _check_pair(m1, m2)
    from sdar.classify import logdet_term  # deferred: classify depends on this module

    return SdarModel(
        mu1_hat=m1.mu_hat,
        mu2_hat=m2.mu_hat,
        d_hat=d_hat,
        beta_hat=beta_hat,
        logdet_term=logdet_term(d_hat, m1.sigma_hat),
        log_prior_ratio=math.log(m1.pi_hat / m2.pi_hat),
        lambda1=lambda1,
        lambda2=lambda2,
    )


def fit_sdar(data: LabeledDataset, cfg: FitConfig | None = None) -> SdarModel:
    """Fit the full two-class rule: moments, D_hat, beta_hat, and both scalars.

    ``cfg=None`` uses :func:`default_fit_config` radii.  Data must contain
    exactly the classes {1, 2}; more classes raise MoreThanTwoClassesError
    (use the multi-group fit instead).
    """
    ensure_valid_dataset(data, expect_two_classes=True)
    m1 = class_moments(data, 1)
    m2 = class_moments(data, 2)
    if cfg is None:
        cfg = default_fit_config(data.p, m1.n_k, m2.n_k)

    d_hat, _ = estimate_differential_graph(m1, m2, cfg)
    beta_hat, _ = estimate_direction(m1, m2, cfg)
    return sdar_from_solutions(m1, m2, d_hat, beta_hat, cfg.lambda1, cfg.lambda2)
