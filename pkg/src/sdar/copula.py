"""Rank-based discriminant analysis for monotonely distorted features.

Each feature is modeled as an unknown strictly increasing transform of a
latent Gaussian coordinate.  Everything here is computed from ranks and
empirical CDFs, so the fitted classifier is invariant under strictly
increasing per-feature maps of the data:

  * per-feature Winsorized empirical CDFs, clipped to [1/n^2, 1 - 1/n^2]
    so probit values stay finite;
  * latent class-2 moments mu2_hat[j], sigma2_jj_hat[j] from probit-scores
    of class-2 data under the class-1 CDFs (class 1 is pinned to mean 0,
    variance 1, which fixes the scale of the latent space);
  * latent correlations via Kendall's tau and the sine transform
    R = sin(pi tau / 2);
  * the same two l1 programs as the Gaussian path, fed the latent moments.

Classification maps a raw vector through the pooled transform estimate
f_hat and evaluates the fitted quadratic rule on the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.special

from sdar.classify import NonPositiveEigenvalueError, classify_sdar, discriminant
from sdar.core import (
    LabeledDataset,
    NonFiniteError,
    SdarModel,
    TooFewSamplesError,
    ValidationError,
    ensure_valid_dataset,
)
from sdar.estimate import (
    FitConfig,
    default_fit_config,
    solve_direction_program,
    solve_graph_program,
)


class DegenerateVarianceError(ValidationError):
    """A feature's latent class-2 variance is exactly zero.

    Happens when every class-2 value lands in the same class-1 ECDF cell
    (constant features, or total separation saturating the Winsorization
    clip); the quadratic rule is undefined on that feature.
    """


@dataclass(frozen=True)
class WinsorizedEcdf:
    """Empirical CDF with output clipped to [1/n^2, 1 - 1/n^2].

    The clip keeps probit transforms finite for arguments outside the
    sample range.  Evaluation is nondecreasing and depends on the sample
    only through counts, so strictly increasing rescalings of sample and
    argument together leave the output bit-identical.
    """

    sorted_values: np.ndarray
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise TooFewSamplesError(f"ECDF needs n >= 2 samples, got {self.n}")
        if self.sorted_values.shape != (self.n,):
            raise ValidationError("sorted_values must be a length-n vector")

    def evaluate(self, t) -> np.ndarray | float:
        t = np.asarray(t, dtype=np.float64)
        count = np.searchsorted(self.sorted_values, t, side="right")
        lo = 1.0 / (self.n * self.n)
        out = np.clip(count / self.n, lo, 1.0 - lo)
        return float(out) if t.ndim == 0 else out


def winsorized_ecdf(samples: np.ndarray) -> WinsorizedEcdf:
    """Build the clipped ECDF of one feature's sample."""
    values = np.asarray(samples, dtype=np.float64).ravel()
    if values.shape[0] < 2:
        raise TooFewSamplesError(f"ECDF needs n >= 2 samples, got {values.shape[0]}")
    if not np.isfinite(values).all():
        raise NonFiniteError("ECDF samples contain non-finite values")
    return WinsorizedEcdf(sorted_values=np.sort(values), n=values.shape[0])


def copula_class2_moments(
    data2: np.ndarray, ecdf1: list[WinsorizedEcdf]
) -> tuple[np.ndarray, np.ndarray]:
    """Latent mean and variance of class 2, one entry per feature.

    Class-2 values are pushed through the class-1 ECDFs and the probit;
    the mean uses the 1/n2 divisor and the variance the 1/(n2 - 1) divisor.
    """
    data2 = np.asarray(data2, dtype=np.float64)
    if data2.ndim != 2 or data2.shape[1] != len(ecdf1):
        raise ValidationError("data2 must be n2 x p with one ECDF per column")
    n2 = data2.shape[0]
    if n2 < 2:
        raise TooFewSamplesError(f"need n2 >= 2 rows, got {n2}")
    scores = np.column_stack(
        [scipy.special.ndtri(ecdf1[j].evaluate(data2[:, j])) for j in range(len(ecdf1))]
    )
    mu2 = scores.mean(axis=0)
    sigma2_jj = np.sum((scores - mu2) ** 2, axis=0) / (n2 - 1)
    # a column of identical scores (total separation saturating the clip)
    # must report exactly zero spread; the mean subtraction otherwise
    # leaves rounding dust that defeats downstream zero checks
    sigma2_jj[scores.min(axis=0) == scores.max(axis=0)] = 0.0
    return mu2, sigma2_jj


def kendall_tau_matrix(data: np.ndarray) -> np.ndarray:
    """Pairwise-concordance correlation matrix, diagonal set to 1.

    tau[a, b] averages sign((X_ia - X_i'a)(X_ib - X_i'b)) over the
    n(n-1)/2 unordered row pairs; tied pairs contribute 0.  Accumulated
    as one sign-matrix product per anchor row, deterministic order.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("data must be an n x p matrix")
    n, p = x.shape
    if n < 2:
        raise TooFewSamplesError(f"need n >= 2 rows, got {n}")
    if not np.isfinite(x).all():
        raise NonFiniteError("data contains non-finite values")
    acc = np.zeros((p, p))
    for i in range(n - 1):
        s = np.sign(x[i + 1 :] - x[i])
        acc += s.T @ s
    tau = acc / (0.5 * n * (n - 1))
    tau = np.triu(tau) + np.triu(tau, 1).T  # exact symmetry
    np.fill_diagonal(tau, 1.0)
    return tau


def sine_correlation(tau: np.ndarray) -> np.ndarray:
    """Latent Gaussian correlations sin(pi tau / 2), unit diagonal."""
    tau = np.asarray(tau, dtype=np.float64)
    if tau.ndim != 2 or tau.shape[0] != tau.shape[1]:
        raise ValidationError("tau must be square")
    if np.max(np.abs(tau), initial=0.0) > 1.0:
        raise ValidationError("tau entries must lie in [-1, 1]")
    r = np.sin(0.5 * math.pi * tau)
    np.fill_diagonal(r, 1.0)
    return r


def _project_correlation(r: np.ndarray, floor: float = 1e-8) -> tuple[np.ndarray, bool]:
    """Clip eigenvalues below ``floor`` and rescale the diagonal back to 1."""
    w, v = np.linalg.eigh(r)
    if w[0] >= floor:
        return r, False
    w = np.maximum(w, floor)
    fixed = (v * w) @ v.T
    scale = 1.0 / np.sqrt(np.diag(fixed))
    fixed = scale[:, None] * fixed * scale[None, :]
    fixed = np.triu(fixed) + np.triu(fixed, 1).T
    np.fill_diagonal(fixed, 1.0)
    return fixed, True


def _logdet_plus_identity(d: np.ndarray, sigma: np.ndarray) -> float:
    """log|D sigma + I| for symmetric inputs that may be indefinite.

    The Gaussian path's eigenvalue route needs sigma PSD; the rank-based
    correlation estimates occasionally are not, so this takes the sign-aware
    determinant of the product directly.
    """
    sign, value = np.linalg.slogdet(d @ sigma + np.eye(sigma.shape[0]))
    if sign <= 0.0:
        raise NonPositiveEigenvalueError(
            "determinant of D Sigma1 + I is not positive; the fitted D is too large"
        )
    return float(value)


@dataclass
class CopulaModel:
    """Fitted rank-based classifier.

    ``sdar`` holds the quadratic rule on the latent scale; classification
    maps raw vectors through the pooled transform estimate first.  Class-1
    latent moments are pinned to (0, 1) and therefore not stored.
    """

    ecdf1: list[WinsorizedEcdf]
    ecdf2: list[WinsorizedEcdf]
    mu2_hat: np.ndarray
    sigma2_jj_hat: np.ndarray
    r_hat1: np.ndarray
    r_hat2: np.ndarray
    sigma_tilde1: np.ndarray
    sigma_tilde2: np.ndarray
    sdar: SdarModel
    n1: int
    n2: int
    r_hat_projected: tuple[bool, bool] = (False, False)

    def __post_init__(self):
        p = len(self.ecdf1)
        for name, r in (("r_hat1", self.r_hat1), ("r_hat2", self.r_hat2)):
            if not np.array_equal(np.diag(r), np.ones(p)):
                raise ValidationError(f"{name} diagonal must be identically 1")
            if np.max(np.abs(r), initial=0.0) > 1.0:
                raise ValidationError(f"{name} entries must lie in [-1, 1]")
        for name, s in (("sigma_tilde1", self.sigma_tilde1), ("sigma_tilde2", self.sigma_tilde2)):
            if np.max(np.abs(s - s.T), initial=0.0) != 0.0:
                raise ValidationError(f"{name} must be exactly symmetric")

    @property
    def p(self) -> int:
        return len(self.ecdf1)

    def transform(self, z: np.ndarray) -> np.ndarray:
        """Pooled per-feature transform estimate f_hat applied to raw data.

        f_hat_j(t) averages the two classes' probit-score maps with weights
        n_k/(n1+n2); class 1 contributes its raw probit (latent moments
        (0, 1)), class 2 its affinely rescaled one.
        """
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 1
        zs = z[None, :] if single else z
        if zs.ndim != 2 or zs.shape[1] != self.p:
            raise ValidationError(f"z must have {self.p} columns, got shape {z.shape}")
        if not np.isfinite(zs).all():
            raise NonFiniteError("z contains non-finite entries")
        out = np.empty_like(zs)
        w1 = self.n1 / (self.n1 + self.n2)
        w2 = self.n2 / (self.n1 + self.n2)
        sd2 = np.sqrt(self.sigma2_jj_hat)
        for j in range(self.p):
            g1 = scipy.special.ndtri(self.ecdf1[j].evaluate(zs[:, j]))
            g2 = self.mu2_hat[j] + sd2[j] * scipy.special.ndtri(
                self.ecdf2[j].evaluate(zs[:, j])
            )
            out[:, j] = w1 * g1 + w2 * g2
        return out[0] if single else out


@dataclass
class RankStatistics:
    """Everything the rank pipeline extracts from data before the programs.

    Computed once per training split; both program solutions and the final
    model assembly are functions of these statistics alone, which lets grid
    tuning cache them across lambda candidates.
    """

    ecdf1: list[WinsorizedEcdf]
    ecdf2: list[WinsorizedEcdf]
    mu2_hat: np.ndarray
    sigma2_jj_hat: np.ndarray
    r_hat1: np.ndarray
    r_hat2: np.ndarray
    sigma_tilde1: np.ndarray
    sigma_tilde2: np.ndarray
    n1: int
    n2: int
    r_hat_projected: tuple[bool, bool]

    @property
    def p(self) -> int:
        return self.mu2_hat.shape[0]


def rank_statistics(
    data: LabeledDataset, project_correlation: bool = False
) -> RankStatistics:
    """Latent-scale moment and correlation estimates of two-class data.

    ``project_correlation`` repairs sine-correlation matrices whose smallest
    eigenvalue falls below 1e-8 by eigenvalue clipping; off by default since
    the downstream programs accept indefinite inputs.
    """
    ensure_valid_dataset(data, expect_two_classes=True)
    x1 = data.features[data.labels == 1]
    x2 = data.features[data.labels == 2]
    p = data.p

    ecdf1 = [winsorized_ecdf(x1[:, j]) for j in range(p)]
    ecdf2 = [winsorized_ecdf(x2[:, j]) for j in range(p)]
    mu2, sigma2_jj = copula_class2_moments(x2, ecdf1)
    dead = np.flatnonzero(sigma2_jj == 0.0)
    if dead.size:
        raise DegenerateVarianceError(
            f"zero latent variance on feature(s) {dead.tolist()}; "
            "these features carry no usable spread"
        )

    r1 = sine_correlation(kendall_tau_matrix(x1))
    r2 = sine_correlation(kendall_tau_matrix(x2))
    proj1 = proj2 = False
    if project_correlation:
        r1, proj1 = _project_correlation(r1)
        r2, proj2 = _project_correlation(r2)

    sd2 = np.sqrt(sigma2_jj)
    return RankStatistics(
        ecdf1=ecdf1,
        ecdf2=ecdf2,
        mu2_hat=mu2,
        sigma2_jj_hat=sigma2_jj,
        r_hat1=r1,
        r_hat2=r2,
        sigma_tilde1=r1,
        # outer(sd2, sd2) is exactly symmetric, so the product stays symmetric
        sigma_tilde2=r2 * np.outer(sd2, sd2),
        n1=x1.shape[0],
        n2=x2.shape[0],
        r_hat_projected=(proj1, proj2),
    )


def csdar_from_solutions(
    stats: RankStatistics,
    d_hat: np.ndarray,
    beta_hat: np.ndarray,
    lambda1: float,
    lambda2: float,
) -> CopulaModel:
    """Assemble the rank-based classifier from precomputed program solutions."""
    sdar = SdarModel(
        mu1_hat=np.zeros(stats.p),
        mu2_hat=stats.mu2_hat,
        d_hat=d_hat,
        beta_hat=beta_hat,
        logdet_term=_logdet_plus_identity(d_hat, stats.sigma_tilde1),
        log_prior_ratio=math.log(stats.n1 / stats.n2),
        lambda1=lambda1,
        lambda2=lambda2,
    )
    return CopulaModel(
        ecdf1=stats.ecdf1,
        ecdf2=stats.ecdf2,
        mu2_hat=stats.mu2_hat,
        sigma2_jj_hat=stats.sigma2_jj_hat,
        r_hat1=stats.r_hat1,
        r_hat2=stats.r_hat2,
        sigma_tilde1=stats.sigma_tilde1,
        sigma_tilde2=stats.sigma_tilde2,
        sdar=sdar,
        n1=stats.n1,
        n2=stats.n2,
        r_hat_projected=stats.r_hat_projected,
    )


def fit_csdar(
    data: LabeledDataset,
    cfg: FitConfig | None = None,
    project_correlation: bool = False,
) -> CopulaModel:
    """Fit the rank-based classifier on two-class data.

    ``project_correlation`` repairs sine-correlation matrices whose smallest
    eigenvalue falls below 1e-8 by eigenvalue clipping; off by default since
    the downstream programs accept indefinite inputs.
    """
    stats = rank_statistics(data, project_correlation=project_correlation)
    if cfg is None:
        cfg = default_fit_config(stats.p, stats.n1, stats.n2)
    d_hat, _ = solve_graph_program(stats.sigma_tilde1, stats.sigma_tilde2, cfg)
    beta_hat, _ = solve_direction_program(stats.sigma_tilde2, stats.mu2_hat, cfg)
    return csdar_from_solutions(stats, d_hat, beta_hat, cfg.lambda1, cfg.lambda2)


def csdar_discriminant(z: np.ndarray, model: CopulaModel) -> np.ndarray | float:
    """Decision statistic on raw inputs: transform, then the latent rule."""
    return discriminant(model.transform(z), model.sdar)


def classify_csdar(z: np.ndarray, model: CopulaModel) -> np.ndarray | int:
    """Label raw vectors: 1 where the transformed statistic is > 0, else 2."""
    return classify_sdar(model.transform(z), model.sdar)
