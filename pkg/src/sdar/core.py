"""Shared types, validation, and exact Gaussian reference computations.

Conventions used across the package
-----------------------------------
Two-class problems carry labels in {1, 2}; multi-group problems use 1..K.
For a pair of Gaussian populations N(mu1, Sigma1), N(mu2, Sigma2) with priors
(pi1, pi2), the quantities of interest are

    Omega_k = Sigma_k^{-1}
    D       = Omega2 - Omega1          (differential graph)
    delta   = mu2 - mu1
    beta    = Omega2 @ delta           (discriminating direction)

All estimators in this package target D and beta directly, without ever
inverting a covariance estimate.  Sample covariances use the 1/n_k divisor and
sample priors are n_k / (n1 + n2).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.linalg


# ---------------------------------------------------------------------------
# Errors.  Every public function raises subclasses of SdarError for contract
# violations so callers can distinguish bad input from numerical failure.
# ---------------------------------------------------------------------------


class SdarError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SdarError, ValueError):
    """Input violates a documented precondition (shape, domain, finiteness)."""


class EmptyClassError(ValidationError):
    """A class label in the expected range has zero rows."""


class UnknownClassError(ValidationError):
    """A requested class id does not occur in the dataset."""


class TooFewSamplesError(ValidationError):
    """A class has fewer rows than the computation needs."""


class NonFiniteError(ValidationError):
    """Features or parameters contain NaN or Inf."""


class LabelDomainError(ValidationError):
    """Labels fall outside the expected {1..K} (or {1,2}) domain."""


class MoreThanTwoClassesError(LabelDomainError):
    """A two-class routine received more than two classes."""


class NumericalError(SdarError, ArithmeticError):
    """A numerical computation failed in a way retrying cannot fix."""


class FactorizationError(NumericalError):
    """A covariance matrix is not positive definite (Cholesky failed)."""


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


@dataclass
class LabeledDataset:
    """Feature matrix with integer class labels.

    Attributes
    ----------
    features : ndarray, shape (n, p)
        Observations in rows.  Coerced to float64.
    labels : ndarray, shape (n,)
        Class labels, coerced to int64.  Two-class data uses {1, 2}.
    feature_names : tuple of str, optional
        Column names carried through CSV ingestion and screening.
    feature_indices : tuple of int, optional
        Original column positions retained by screening (0-based, ascending).
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] | None = None
    feature_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2:
            raise ValidationError(
                f"features must be 2-D, got shape {self.features.shape}"
            )
        if self.labels.ndim != 1:
            raise ValidationError(
                f"labels must be 1-D, got shape {self.labels.shape}"
            )
        if self.labels.shape[0] != self.features.shape[0]:
            raise ValidationError(
                f"{self.features.shape[0]} rows but {self.labels.shape[0]} labels"
            )
        if not np.issubdtype(self.labels.dtype, np.integer):
            as_int = self.labels.astype(np.int64)
            if not np.array_equal(as_int, self.labels):
                raise LabelDomainError("labels must be integers")
            self.labels = as_int
        else:
            self.labels = self.labels.astype(np.int64)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Violation:
    """One problem found by :func:`validate_dataset`.

    ``kind`` is one of "shape", "finiteness", "label-domain", "class-count";
    ``row``/``col`` locate the offending entry when that makes sense.
    """

    kind: str
    message: str
    row: int | None = None
    col: int | None = None


def validate_dataset(dataset: LabeledDataset) -> list[Violation]:
    """Collect every invariant violation; an empty list means valid.

    Checks: n >= 4 and p >= 1, all features finite, labels integers in 1..K,
    and every class 1..K present with at least two rows (covariances need
    n_k >= 2).  Never mutates or raises; violations are returned as data.
    """
    out: list[Violation] = []
    if dataset.n < 4:
        out.append(Violation("shape", f"need at least 4 rows, got {dataset.n}"))
    if dataset.p < 1:
        out.append(Violation("shape", "need at least one feature column"))
    finite = np.isfinite(dataset.features)
    if not finite.all():
        for row, col in np.argwhere(~finite):
            out.append(Violation(
                "finiteness",
                f"non-finite feature at row {row}, column {col}",
                row=int(row),
                col=int(col),
            ))
    if dataset.n == 0:
        return out
    labels = dataset.labels
    lo, hi = int(labels.min()), int(labels.max())
    if lo < 1:
        out.append(Violation("label-domain", f"labels must start at 1, found {lo}"))
        return out
    counts = np.bincount(labels, minlength=hi + 1)[1:]
    for k, c in enumerate(counts, start=1):
        if c < 2:
            out.append(Violation("class-count", f"class {k} has n_k < 2 (found {c})"))
    return out


def ensure_valid_dataset(dataset: LabeledDataset, expect_two_classes: bool = False) -> None:
    """Raise the matching error for the first violation, if any.

    With ``expect_two_classes``, labels above 2 raise
    :class:`MoreThanTwoClassesError` before anything else so callers can
    redirect to the multi-group path.
    """
    if expect_two_classes and dataset.n and int(dataset.labels.max()) > 2:
        raise MoreThanTwoClassesError(
            f"expected labels in {{1, 2}}, found label {int(dataset.labels.max())}"
        )
    for v in validate_dataset(dataset):
        if v.kind == "finiteness":
            raise NonFiniteError(v.message)
        if v.kind == "label-domain":
            raise LabelDomainError(v.message)
        if v.kind == "class-count":
            raise TooFewSamplesError(v.message)
        raise ValidationError(v.message)


def _check_square_symmetric(mat: np.ndarray, name: str, tol: float = 1e-8) -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {mat.shape}")
    if not np.isfinite(mat).all():
        raise NonFiniteError(f"{name} contains non-finite entries")
    asym = np.max(np.abs(mat - mat.T)) if mat.size else 0.0
    if asym > tol * (1.0 + np.max(np.abs(mat))):
        raise ValidationError(f"{name} is not symmetric (max asymmetry {asym:.3e})")
    return mat


@dataclass
class GaussianPairParams:
    """Exact parameters of a two-class Gaussian mixture.

    Priors must be positive and sum to one within 1e-12; covariance matrices
    must be symmetric (within 1e-8 relative).  Positive definiteness is
    checked by the routines that need it.
    """

    pi1: float
    pi2: float
    mu1: np.ndarray
    mu2: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        self.pi1 = float(self.pi1)
        self.pi2 = float(self.pi2)
        if not (self.pi1 > 0.0 and self.pi2 > 0.0):
            raise ValidationError("priors must be strictly positive")
        if abs(self.pi1 + self.pi2 - 1.0) > 1e-12:
            raise ValidationError(
                f"priors must sum to 1, got {self.pi1 + self.pi2!r}"
            )
        self.mu1 = np.asarray(self.mu1, dtype=np.float64).ravel()
        self.mu2 = np.asarray(self.mu2, dtype=np.float64).ravel()
        self.sigma1 = _check_square_symmetric(self.sigma1, "sigma1")
        self.sigma2 = _check_square_symmetric(self.sigma2, "sigma2")
        p = self.mu1.shape[0]
        if not (
            self.mu2.shape[0] == p
            and self.sigma1.shape == (p, p)
            and self.sigma2.shape == (p, p)
        ):
            raise ValidationError("mu1, mu2, sigma1, sigma2 dimensions disagree")
        if not (np.isfinite(self.mu1).all() and np.isfinite(self.mu2).all()):
            raise NonFiniteError("means contain non-finite entries")

    @property
    def p(self) -> int:
        return self.mu1.shape[0]


@dataclass
class ClassMoments:
    """Sample moments of one class.

    ``sigma_hat`` uses the 1/n_k divisor and is symmetrized on construction;
    ``pi_hat`` is the class share of the full dataset.  Construction rejects
    covariance estimates with eigenvalues below -1e-10 (a true sample
    covariance is PSD; anything lower signals a broken caller).
    """

    n_k: int
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    pi_hat: float

    def __post_init__(self):
        self.n_k = int(self.n_k)
        self.pi_hat = float(self.pi_hat)
        self.mu_hat = np.asarray(self.mu_hat, dtype=np.float64).ravel()
        s = np.asarray(self.sigma_hat, dtype=np.float64)
        if s.ndim != 2 or s.shape != (self.mu_hat.shape[0],) * 2:
            raise ValidationError(
                f"sigma_hat shape {s.shape} does not match mean length {self.mu_hat.shape[0]}"
            )
        self.sigma_hat = 0.5 * (s + s.T)
        if self.n_k < 1:
            raise EmptyClassError("class has no rows")
        if not (0.0 < self.pi_hat < 1.0):
            raise ValidationError(f"pi_hat must be in (0, 1), got {self.pi_hat!r}")
        if not (np.isfinite(self.mu_hat).all() and np.isfinite(self.sigma_hat).all()):
            raise NonFiniteError("moments contain non-finite entries")
        lo = float(scipy.linalg.eigvalsh(self.sigma_hat, subset_by_index=[0, 0])[0])
        if lo < -1e-10:
            raise ValidationError(
                f"sigma_hat has eigenvalue {lo:.3e} < -1e-10; not a covariance"
            )

    @property
    def p(self) -> int:
        return self.mu_hat.shape[0]


@dataclass
class SdarModel:
    """Fitted two-class discriminant rule.

    The decision statistic is

        Q(z) = (z - mu1)' D (z - mu1) - 2 beta' (z - (mu1 + mu2)/2)
               - logdet_term + log_prior_ratio

    with label 1 when Q(z) > 0 and label 2 otherwise.  Fitted models store
    log_prior_ratio = log(pi1_hat / pi2_hat); models built from exact
    parameters use 2 log(pi1 / pi2), which makes Q equal twice the Gaussian
    log likelihood ratio.
    """

    mu1_hat: np.ndarray
    mu2_hat: np.ndarray
    d_hat: np.ndarray
    beta_hat: np.ndarray
    logdet_term: float
    log_prior_ratio: float
    lambda1: float = float("nan")
    lambda2: float = float("nan")

    def __post_init__(self):
        self.mu1_hat = np.asarray(self.mu1_hat, dtype=np.float64).ravel()
        self.mu2_hat = np.asarray(self.mu2_hat, dtype=np.float64).ravel()
        self.d_hat = np.asarray(self.d_hat, dtype=np.float64)
        self.beta_hat = np.asarray(self.beta_hat, dtype=np.float64).ravel()
        self.logdet_term = float(self.logdet_term)
        self.log_prior_ratio = float(self.log_prior_ratio)
        p = self.mu1_hat.shape[0]
        if self.d_hat.shape != (p, p) or self.beta_hat.shape[0] != p:
            raise ValidationError("model term dimensions disagree")
        if np.max(np.abs(self.d_hat - self.d_hat.T), initial=0.0) != 0.0:
            raise ValidationError("d_hat must be exactly symmetric")
        if not np.isfinite(self.logdet_term):
            raise ValidationError("logdet_term must be finite")

    @property
    def p(self) -> int:
        return self.mu1_hat.shape[0]


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the l1 constrained solver.

    Attributes
    ----------
    lam : float
        Constraint radius (>= 0).  Zero switches to the equality-constrained
        path.
    max_outer_iters : int
        Newton iteration cap per phase; hitting it returns the best iterate
        with ``converged=False``.
    duality_gap_tol : float
        Stop when the surrogate duality gap falls below this value.
    cg_tol : float
        Relative residual target for the inner conjugate-gradient solves.
    cg_max_iters : int
        Iteration cap for each inner CG solve.
    """

    lam: float = 0.1
    max_outer_iters: int = 90
    duality_gap_tol: float = 1e-7
    cg_tol: float = 1e-9
    cg_max_iters: int = 500

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0.0:
            raise ValidationError(f"lam must be finite and >= 0, got {self.lam!r}")
        if self.max_outer_iters < 1 or self.cg_max_iters < 1:
            raise ValidationError("iteration caps must be positive")
        if self.duality_gap_tol <= 0.0 or self.cg_tol <= 0.0:
            raise ValidationError("tolerances must be positive")

    def with_lam(self, lam: float) -> "SolverConfig":
        """Copy of this config with a different constraint radius."""
        return dataclasses.replace(self, lam=float(lam))


# ---------------------------------------------------------------------------
# Exact Gaussian computations
# ---------------------------------------------------------------------------


def _chol_lower(sigma: np.ndarray, name: str) -> np.ndarray:
    try:
        return scipy.linalg.cholesky(sigma, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise FactorizationError(f"{name} is not positive definite") from exc


def log_likelihood_ratio(z: np.ndarray, params: GaussianPairParams) -> np.ndarray | float:
    """log(pi1 N(z; mu1, Sigma1)) - log(pi2 N(z; mu2, Sigma2)).

    Accepts a single point of shape (p,) or a batch of shape (n, p); returns
    a float or an (n,) array accordingly.  Covariances must be positive
    definite (FactorizationError otherwise).
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    zs = z[None, :] if single else z
    if zs.ndim != 2 or zs.shape[1] != params.p:
        raise ValidationError(f"z must have {params.p} columns, got shape {z.shape}")
    if not np.isfinite(zs).all():
        raise NonFiniteError("z contains non-finite entries")

    out = np.full(zs.shape[0], np.log(params.pi1) - np.log(params.pi2))
    for sign, mu, sigma, name in (
        (1.0, params.mu1, params.sigma1, "sigma1"),
        (-1.0, params.mu2, params.sigma2, "sigma2"),
    ):
        lower = _chol_lower(sigma, name)
        # log N(z; mu, Sigma) = -p/2 log 2pi - sum(log diag L) - ||L^-1 (z-mu)||^2 / 2
        half_logdet = float(np.sum(np.log(np.diag(lower))))
        white = scipy.linalg.solve_triangular(lower, (zs - mu).T, lower=True)
        quad = np.sum(white * white, axis=0)
        out += sign * (-0.5 * params.p * np.log(2.0 * np.pi) - half_logdet - 0.5 * quad)
    return float(out[0]) if single else out
