"""Discriminant evaluation and label assignment.

Two-class rule: with a = z - mu1 and mu_bar = (mu1 + mu2)/2,

    Q(z) = a' D a - 2 beta' (z - mu_bar) - logdet_term + log_prior_ratio,

label 1 when Q(z) > 0, label 2 otherwise (ties to 2).  Fed exact parameters
with logdet_term = log|D Sigma1 + I| and prior term 2 log(pi1/pi2), Q equals
twice the Gaussian log likelihood ratio, which is the oracle rule.

Multi-group rule: class 1 is the benchmark.  For k >= 2, with
D_k = Omega1 - Omega_k, beta_k = Omega1 (mu_k - mu1), a_k = z - mu_k,

    Q_k(z) = -1/2 a_k' D_k a_k - beta_k' (z - (mu1 + mu_k)/2)
             - 1/2 log|I - D_k Sigma1| - log(pi_k / pi1),    Q_1 = 0,

and z is assigned to argmin_k Q_k (ties to the smallest index).  With exact
parameters Q_k equals -log of the posterior ratio of class k to class 1, so
the argmin is exactly the Bayes rule; the tests verify this against a direct
density computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from sdar.core import (
    GaussianPairParams,
    LabeledDataset,
    NonFiniteError,
    NumericalError,
    SdarModel,
    ValidationError,
    _check_square_symmetric,
    ensure_valid_dataset,
)
from sdar.estimate import (
    FitConfig,
    class_moments,
    default_fit_config,
    estimate_differential_graph,
    estimate_direction,
)
from sdar.solver import matrix_operator, solve_l1_dantzig, sylvester_operator


class NonPositiveEigenvalueError(NumericalError):
    """log|D Sigma + I| does not exist: an eigenvalue is at or below zero.

    During tuning this marks the candidate radius as invalid (the estimated
    D is too large for the determinant identity to hold).
    """


def _as_batch(z: np.ndarray, p: int) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    zs = z[None, :] if single else z
    if zs.ndim != 2 or zs.shape[1] != p:
        raise ValidationError(f"z must have {p} columns, got shape {z.shape}")
    if not np.isfinite(zs).all():
        raise NonFiniteError("z contains non-finite entries")
    return zs, single


def logdet_term(d: np.ndarray, sigma1: np.ndarray) -> float:
    """log|D Sigma1 + I| for symmetric D and PSD Sigma1.

    Computed through the symmetric matrix R D R + I where R is the PSD square
    root of Sigma1; D Sigma1 + I has the same determinant, but the symmetric
    form keeps the eigenvalues real.  Eigenvalues at or below 1e-12 raise
    NonPositiveEigenvalueError.
    """
    d = _check_square_symmetric(d, "d")
    sigma1 = _check_square_symmetric(sigma1, "sigma1")
    if d.shape != sigma1.shape:
        raise ValidationError("d and sigma1 must have the same shape")
    w, v = scipy.linalg.eigh(sigma1)
    if w[0] < -1e-10 * max(1.0, float(w[-1])):
        raise ValidationError(f"sigma1 has eigenvalue {w[0]:.3e}; not PSD")
    root = (v * np.sqrt(np.maximum(w, 0.0))) @ v.T
    middle = root @ d @ root
    evals = scipy.linalg.eigvalsh(0.5 * (middle + middle.T))
    if float(evals.min(initial=np.inf)) <= -1.0 + 1e-12:
        raise NonPositiveEigenvalueError(
            f"smallest eigenvalue of D Sigma1 + I is {1.0 + evals.min():.3e}"
        )
    return float(np.sum(np.log1p(evals)))


def discriminant(z: np.ndarray, model: SdarModel) -> np.ndarray | float:
    """Decision statistic Q(z); accepts one point (p,) or a batch (n, p)."""
    zs, single = _as_batch(z, model.p)
    a = zs - model.mu1_hat
    quad = np.einsum("ij,jk,ik->i", a, model.d_hat, a)
    mu_bar = 0.5 * (model.mu1_hat + model.mu2_hat)
    lin = 2.0 * ((zs - mu_bar) @ model.beta_hat)
    out = quad - lin - model.logdet_term + model.log_prior_ratio
    return float(out[0]) if single else out


def classify_sdar(z: np.ndarray, model: SdarModel) -> np.ndarray | int:
    """Label 1 where Q(z) > 0, else 2 (Q = 0 ties go to class 2)."""
    q = discriminant(z, model)
    if np.isscalar(q):
        return 1 if q > 0.0 else 2
    return np.where(q > 0.0, 1, 2).astype(np.int64)


def oracle_model(theta: GaussianPairParams) -> SdarModel:
    """Exact-parameter rule: D, beta, log|D Sigma1 + I|, 2 log(pi1/pi2).

    The resulting discriminant equals 2x the log likelihood ratio, so
    classification with it is the Bayes rule.
    """
    omega1 = _spd_inverse(theta.sigma1, "sigma1")
    omega2 = _spd_inverse(theta.sigma2, "sigma2")
    d = omega2 - omega1
    d = 0.5 * (d + d.T)
    return SdarModel(
        mu1_hat=theta.mu1,
        mu2_hat=theta.mu2,
        d_hat=d,
        beta_hat=omega2 @ (theta.mu2 - theta.mu1),
        logdet_term=logdet_term(d, theta.sigma1),
        log_prior_ratio=2.0 * math.log(theta.pi1 / theta.pi2),
    )


def _spd_inverse(sigma: np.ndarray, name: str) -> np.ndarray:
    try:
        factor = scipy.linalg.cho_factor(sigma, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise ValidationError(f"{name} must be positive definite") from exc
    inv = scipy.linalg.cho_solve(factor, np.eye(sigma.shape[0]))
    return 0.5 * (inv + inv.T)


def classify_oracle(z: np.ndarray, theta: GaussianPairParams) -> np.ndarray | int:
    """Bayes rule for exact parameters; label 1 iff Q(z) > 0."""
    return classify_sdar(z, oracle_model(theta))


# ---------------------------------------------------------------------------
# Multi-group extension
# ---------------------------------------------------------------------------


@dataclass
class MultigroupModel:
    """Per-class terms of the multi-group rule, class 1 as benchmark.

    All lists have length K, entry k-1 belonging to class k.  The class-1
    slots hold the neutral values (zero matrix/vector/scalar) so that the
    stored data evaluates Q_1 = 0; d_hat[k-1] estimates Omega1 - Omega_k and
    beta_hat[k-1] estimates Omega1 (mu_k - mu1).  logdet_term[k-1] stores
    log|I - D_k Sigma1_hat|, the sign the posterior-ratio identity needs.
    """

    K: int
    mu_hat: list[np.ndarray]
    d_hat: list[np.ndarray]
    beta_hat: list[np.ndarray]
    logdet_term: list[float]
    log_prior: list[float]

    def __post_init__(self):
        if self.K < 2:
            raise ValidationError(f"need K >= 2 classes, got {self.K}")
        lists = (self.mu_hat, self.d_hat, self.beta_hat, self.logdet_term, self.log_prior)
        if any(len(item) != self.K for item in lists):
            raise ValidationError("all per-class lists must have length K")
        for k, mat in enumerate(self.d_hat, start=1):
            if np.max(np.abs(mat - mat.T), initial=0.0) != 0.0:
                raise ValidationError(f"d_hat for class {k} must be exactly symmetric")

    @property
    def p(self) -> int:
        return self.mu_hat[0].shape[0]


def fit_multigroup(data: LabeledDataset, cfg: FitConfig | None = None) -> MultigroupModel:
    """Estimate all per-class terms of the multi-group rule.

    For each k >= 2 the differential graph program runs on (Sigma1_hat,
    Sigmak_hat) with target Sigmak_hat - Sigma1_hat, and the direction
    program on Sigma1_hat with target muk_hat - mu1_hat.
    """
    ensure_valid_dataset(data)
    labels = np.unique(data.labels)
    big_k = int(labels.max())
    if big_k < 2:
        raise ValidationError("multi-group fit needs at least 2 classes")

    moments = [class_moments(data, k) for k in range(1, big_k + 1)]
    m1 = moments[0]
    if cfg is None:
        n_min = min(m.n_k for m in moments)
        cfg = default_fit_config(data.p, n_min, n_min)

    p = data.p
    mu_hat = [m.mu_hat for m in moments]
    log_prior = [math.log(m.pi_hat) for m in moments]
    d_hat: list[np.ndarray] = [np.zeros((p, p))]
    beta_hat: list[np.ndarray] = [np.zeros(p)]
    logdets: list[float] = [0.0]
    for mk in moments[1:]:
        op = sylvester_operator(m1.sigma_hat, mk.sigma_hat)
        b = (mk.sigma_hat - m1.sigma_hat).reshape(-1)
        report = solve_l1_dantzig(op, b, cfg.solver.with_lam(cfg.lambda1))
        dk_raw = report.solution.reshape(p, p)
        dk = 0.5 * (dk_raw + dk_raw.T)
        d_hat.append(dk)

        bop = matrix_operator(m1.sigma_hat)
        report = solve_l1_dantzig(bop, mk.mu_hat - m1.mu_hat, cfg.solver.with_lam(cfg.lambda2))
        beta_hat.append(report.solution.copy())

        logdets.append(logdet_term(-dk, m1.sigma_hat))

    return MultigroupModel(
        K=big_k,
        mu_hat=mu_hat,
        d_hat=d_hat,
        beta_hat=beta_hat,
        logdet_term=logdets,
        log_prior=log_prior,
    )


def multigroup_discriminants(z: np.ndarray, model: MultigroupModel) -> np.ndarray:
    """Matrix of Q_k values, shape (n, K); Q_1 is identically zero."""
    zs, single = _as_batch(z, model.p)
    n = zs.shape[0]
    out = np.zeros((n, model.K))
    for k in range(2, model.K + 1):
        a = zs - model.mu_hat[k - 1]
        quad = np.einsum("ij,jk,ik->i", a, model.d_hat[k - 1], a)
        mu_bar = 0.5 * (model.mu_hat[0] + model.mu_hat[k - 1])
        lin = (zs - mu_bar) @ model.beta_hat[k - 1]
        out[:, k - 1] = (
            -0.5 * quad
            - lin
            - 0.5 * model.logdet_term[k - 1]
            - (model.log_prior[k - 1] - model.log_prior[0])
        )
    return out[0] if single else out


def classify_multigroup(z: np.ndarray, model: MultigroupModel) -> np.ndarray | int:
    """argmin_k Q_k(z) as a class label; ties go to the smallest index."""
    q = multigroup_discriminants(z, model)
    if q.ndim == 1:
        return int(np.argmin(q)) + 1
    return (np.argmin(q, axis=1) + 1).astype(np.int64)
