"""Seeded generators for synthetic two-class Gaussian problems.

Three precision-matrix families (dense random factor, AR(1) decay,
sparse random graph) share a common recipe: build the class-2 precision
``om2``, perturb it with a sparse symmetric matrix to get the class-1
precision, and shift the class-2 mean along the inverse covariance so
the discriminating direction has a known sparse support.  Monotone
per-feature maps turn any of them into a non-Gaussian problem whose
latent scores keep the same Gaussian structure; two further settings
with closed-form parameters exercise regimes where plug-in rules
provably cannot match the oracle.

Every generator is pure given its seed.  ``seed`` may be anything
``numpy.random.default_rng`` accepts, so callers can pass composite
keys such as ``[base_seed, stream, replication]`` to split streams
without collisions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from sdar.core import (
    FactorizationError,
    GaussianPairParams,
    LabeledDataset,
    NonFiniteError,
    NumericalError,
    TooFewSamplesError,
    ValidationError,
)

__all__ = [
    "DimensionTooSmallError",
    "OddDimensionError",
    "MonotoneMap",
    "MONOTONE_MAPS",
    "SyntheticProblem",
    "copula_transforms",
    "apply_transforms",
    "apply_inverse_transforms",
    "gen_model",
    "gen_copula_model",
    "gen_impossibility",
    "sample",
    "sample_mixture",
]


class DimensionTooSmallError(ValidationError):
    """The requested dimension cannot hold the sparsity or transform layout."""


class OddDimensionError(ValidationError):
    """A construction that splits coordinates in half got an odd dimension."""


@dataclass(frozen=True)
class MonotoneMap:
    """Strictly increasing scalar map applied elementwise to one feature.

    ``inverse`` undoes ``forward`` on the latent (Gaussian) scale.  When
    ``latent_halfwidth`` is set, the forward map's range is the open
    interval ``(-latent_halfwidth - eps, latent_halfwidth + eps)`` and
    latent draws are clipped to ``[-latent_halfwidth, latent_halfwidth]``
    before inversion.
    """

    name: str
    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    latent_halfwidth: float | None = None


_HALF_PI = math.pi / 2.0

MONOTONE_MAPS: dict[str, MonotoneMap] = {
    m.name: m
    for m in (
        MonotoneMap("identity", lambda x: np.asarray(x, dtype=np.float64), lambda w: np.asarray(w, dtype=np.float64)),
        MonotoneMap("cube", lambda x: np.asarray(x, dtype=np.float64) ** 3, np.cbrt),
        MonotoneMap("arctan", np.arctan, np.tan, latent_halfwidth=_HALF_PI - 1e-6),
        MonotoneMap(
            "arctan_cube",
            lambda x: np.arctan(x) ** 3,
            lambda w: np.tan(np.cbrt(w)),
            latent_halfwidth=(_HALF_PI - 1e-6) ** 3,
        ),
        MonotoneMap(
            "fifth_power",
            lambda x: np.asarray(x, dtype=np.float64) ** 5,
            lambda w: np.sign(w) * np.abs(w) ** 0.2,
        ),
    )
}


def copula_transforms(p: int) -> tuple[MonotoneMap, ...]:
    """Per-feature map layout used by the non-Gaussian models.

    Features 1-5 (1-based) get the cube map, 11-15 arctan, 21-50 cubed
    arctan, 51-85 the fifth power; everything else stays identity.
    Requires p >= 85 so every range fits.
    """
    if p < 85:
        raise DimensionTooSmallError(f"transform layout needs p >= 85, got {p}")
    maps = [MONOTONE_MAPS["identity"]] * p
    maps[0:5] = [MONOTONE_MAPS["cube"]] * 5
    maps[10:15] = [MONOTONE_MAPS["arctan"]] * 5
    maps[20:50] = [MONOTONE_MAPS["arctan_cube"]] * 30
    maps[50:85] = [MONOTONE_MAPS["fifth_power"]] * 35
    return tuple(maps)


def apply_transforms(transforms: tuple[MonotoneMap, ...], x: np.ndarray) -> np.ndarray:
    """Apply each feature's forward map columnwise to an (n, p) matrix."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for j, t in enumerate(transforms):
        out[:, j] = t.forward(x[:, j])
    return out


def apply_inverse_transforms(
    transforms: tuple[MonotoneMap, ...], w: np.ndarray
) -> tuple[np.ndarray, int]:
    """Map latent columns back through each feature's inverse.

    Latent values outside a bounded-range map's domain are clipped to
    the boundary first; the second return value counts the clipped
    entries so callers can verify the rate is negligible.
    """
    w = np.asarray(w, dtype=np.float64)
    out = np.empty_like(w)
    clipped = 0
    for j, t in enumerate(transforms):
        col = w[:, j]
        if t.latent_halfwidth is not None:
            h = t.latent_halfwidth
            clipped += int(np.count_nonzero((col < -h) | (col > h)))
            col = np.clip(col, -h, h)
        out[:, j] = t.inverse(col)
    return out, clipped


@dataclass
class SyntheticProblem:
    """Ground truth for one generated classification problem.

    ``d_true`` is the exact difference of the class precisions
    (class 2 minus class 1) and ``beta_true`` the exact discriminating
    direction; both carry the configured sparsity patterns.
    ``shrink_count`` records how many times the sparse precision
    perturbation was scaled by 0.9 to keep class 1's precision safely
    positive definite.
    """

    theta: GaussianPairParams
    d_true: np.ndarray
    beta_true: np.ndarray
    transforms: tuple[MonotoneMap, ...] | None
    seed: int
    model_id: int
    shrink_count: int = 0

    def __post_init__(self):
        self.d_true = np.asarray(self.d_true, dtype=np.float64)
        self.beta_true = np.asarray(self.beta_true, dtype=np.float64).ravel()
        p = self.theta.p
        if self.d_true.shape != (p, p):
            raise ValidationError(
                f"d_true shape {self.d_true.shape} does not match dimension {p}"
            )
        if not np.array_equal(self.d_true, self.d_true.T):
            raise ValidationError("d_true must be exactly symmetric")
        if self.beta_true.shape != (p,):
            raise ValidationError(
                f"beta_true length {self.beta_true.shape[0]} does not match dimension {p}"
            )
        if not (np.isfinite(self.d_true).all() and np.isfinite(self.beta_true).all()):
            raise NonFiniteError("ground truth contains non-finite entries")
        if self.transforms is not None and len(self.transforms) != p:
            raise ValidationError(
                f"{len(self.transforms)} transforms for {p} features"
            )

    @property
    def p(self) -> int:
        return self.theta.p


def _min_eigenvalue(m: np.ndarray) -> float:
    return float(scipy.linalg.eigvalsh(m, subset_by_index=[0, 0])[0])


def _invert_precision(om: np.ndarray) -> np.ndarray:
    """Invert a PD precision, refine once, and symmetrize exactly."""
    sig = np.linalg.inv(om)
    sig = sig + sig @ (np.eye(om.shape[0]) - om @ sig)
    return 0.5 * (sig + sig.T)


def _precision_model1(p: int, rng: np.random.Generator) -> np.ndarray:
    lam = rng.uniform(1.0, 2.0, size=p)
    u = rng.standard_normal((p, p))
    om = u.T @ (lam[:, None] * u)
    om = 0.5 * (om + om.T)
    om[np.diag_indices(p)] += 1e-6
    return om


def _precision_model2(p: int) -> np.ndarray:
    idx = np.arange(p)
    return 0.5 ** np.abs(np.subtract.outer(idx, idx)).astype(np.float64)


def _precision_model3(p: int, rng: np.random.Generator) -> np.ndarray:
    # Entries are drawn for the full square but only the upper triangle
    # (with diagonal) is kept and mirrored, so each unordered pair is
    # governed by a single draw.
    edge = rng.random((p, p)) < 0.05
    magnitude = rng.uniform(0.5, 1.0, size=(p, p))
    negative = rng.random((p, p)) < 0.5
    raw = np.where(edge, np.where(negative, -magnitude, magnitude), 0.0)
    om = np.triu(raw) + np.triu(raw, 1).T
    shift = max(-_min_eigenvalue(om), 0.0) + 0.05
    om[np.diag_indices(p)] += shift
    return om


def _sparse_symmetric(p: int, s_d: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric matrix with s_d standard normal upper-triangle nonzeros."""
    rows, cols = np.triu_indices(p)
    chosen = rng.choice(rows.shape[0], size=s_d, replace=False)
    values = rng.standard_normal(s_d)
    d = np.zeros((p, p))
    d[rows[chosen], cols[chosen]] = values
    return np.triu(d) + np.triu(d, 1).T


def gen_model(
    model_id: int,
    p: int,
    seed: int,
    s_beta: int | None = None,
    s_d: int | None = None,
) -> SyntheticProblem:
    """Generate one Gaussian two-class problem.

    Model 1 builds the class-2 precision from a dense random factor
    (``U' diag(Unif[1,2]) U`` plus a tiny ridge), model 2 uses the
    geometric decay ``0.5**|i-j|``, and model 3 a sparse random graph
    with entries in ``[0.5, 1] U [-1, -0.5]`` kept with probability
    0.05 and the diagonal shifted so the smallest eigenvalue is at
    least 0.05.

    The class-1 precision adds a sparse symmetric perturbation with
    ``s_d`` upper-triangle nonzeros (default 20); if that drives the
    smallest eigenvalue below ``min(0.05, half of class 2's smallest)``
    the perturbation is scaled by 0.9 until it does not, and the number
    of scalings is recorded.  The class-2 mean is shifted so the exact
    discriminating direction has ``s_beta`` nonzeros (default 10).
    Priors are equal.  The default sparsity needs ``p >= 30``; passing
    either override relaxes that to whatever fits.
    """
    if model_id not in (1, 2, 3):
        raise ValidationError(f"model_id must be 1, 2, or 3, got {model_id!r}")
    explicit = s_beta is not None or s_d is not None
    s_beta = 10 if s_beta is None else int(s_beta)
    s_d = 20 if s_d is None else int(s_d)
    if not explicit and p < 30:
        raise DimensionTooSmallError(
            f"default sparsity needs p >= 30, got {p}; pass s_beta/s_d to override"
        )
    if s_beta < 1 or s_beta > p:
        raise DimensionTooSmallError(f"s_beta={s_beta} does not fit in dimension {p}")
    if s_d < 1 or s_d > p * (p + 1) // 2:
        raise DimensionTooSmallError(f"s_d={s_d} exceeds the upper triangle of a {p}x{p} matrix")

    rng = np.random.default_rng(seed)
    if model_id == 1:
        om2 = _precision_model1(p, rng)
    elif model_id == 2:
        om2 = _precision_model2(p)
    else:
        om2 = _precision_model3(p, rng)

    d = _sparse_symmetric(p, s_d, rng)
    margin = min(0.05, 0.5 * _min_eigenvalue(om2))
    shrink_count = 0
    while _min_eigenvalue(d + om2) < margin:
        d = 0.9 * d
        shrink_count += 1
        if shrink_count > 1000:
            raise NumericalError("sparse perturbation rescaling did not terminate")
    om1 = d + om2

    sigma1 = _invert_precision(om1)
    sigma2 = _invert_precision(om2)
    beta_cfg = np.zeros(p)
    beta_cfg[:s_beta] = 1.0
    mu1 = np.zeros(p)
    mu2 = mu1 - sigma2 @ beta_cfg
    theta = GaussianPairParams(
        pi1=0.5, pi2=0.5, mu1=mu1, mu2=mu2, sigma1=sigma1, sigma2=sigma2
    )
    return SyntheticProblem(
        theta=theta,
        d_true=om2 - om1,
        beta_true=-beta_cfg,
        transforms=None,
        seed=seed,
        model_id=model_id,
        shrink_count=shrink_count,
    )


def gen_copula_model(
    model_id: int,
    p: int,
    seed: int,
    s_beta: int | None = None,
    s_d: int | None = None,
) -> SyntheticProblem:
    """Generate a non-Gaussian problem: model ``model_id - 3`` plus maps.

    Models 4, 5, 6 reuse the Gaussian constructions of models 1, 2, 3
    and attach the fixed monotone transform layout of
    ``copula_transforms``, so latent scores are exactly the Gaussian
    problem while observed features are marginally warped.
    """
    if model_id not in (4, 5, 6):
        raise ValidationError(f"model_id must be 4, 5, or 6, got {model_id!r}")
    transforms = copula_transforms(p)
    base = gen_model(model_id - 3, p, seed, s_beta=s_beta, s_d=s_d)
    return SyntheticProblem(
        theta=base.theta,
        d_true=base.d_true,
        beta_true=base.beta_true,
        transforms=transforms,
        seed=seed,
        model_id=model_id,
        shrink_count=base.shrink_count,
    )


def gen_impossibility(setting: int, p: int, seed: int) -> SyntheticProblem:
    """Closed-form problems where plug-in rules trail the oracle.

    Setting 1: equal identity covariances with opposite dense means of
    length ``1/sqrt(p)`` per coordinate.  Setting 2 (``p`` even): unit
    first coordinate means of opposite sign, identity class-1
    covariance, and a diagonal class-2 covariance whose first ``p/2``
    entries are ``1/(1 + 2/sqrt(p))``.
    """
    if setting not in (1, 2):
        raise ValidationError(f"setting must be 1 or 2, got {setting!r}")
    if p < 1:
        raise DimensionTooSmallError(f"dimension must be positive, got {p}")
    if setting == 1:
        mu1 = np.full(p, 1.0 / math.sqrt(p))
        theta = GaussianPairParams(
            pi1=0.5, pi2=0.5, mu1=mu1, mu2=-mu1, sigma1=np.eye(p), sigma2=np.eye(p)
        )
        d_true = np.zeros((p, p))
        beta_true = -2.0 * mu1
    else:
        if p % 2 != 0:
            raise OddDimensionError(f"setting 2 splits coordinates in half; p={p} is odd")
        bump = 2.0 / math.sqrt(p)
        omega2_diag = np.ones(p)
        omega2_diag[: p // 2] += bump
        mu1 = np.zeros(p)
        mu1[0] = 1.0
        theta = GaussianPairParams(
            pi1=0.5,
            pi2=0.5,
            mu1=mu1,
            mu2=-mu1,
            sigma1=np.eye(p),
            sigma2=np.diag(1.0 / omega2_diag),
        )
        d_true = np.diag(omega2_diag - 1.0)
        beta_true = np.zeros(p)
        beta_true[0] = -2.0 * omega2_diag[0]
    return SyntheticProblem(
        theta=theta,
        d_true=d_true,
        beta_true=beta_true,
        transforms=None,
        seed=seed,
        model_id=setting,
        shrink_count=0,
    )


def _cholesky_factor(sigma: np.ndarray, name: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"{name} is not positive definite") from exc


def _emit_features(
    problem: SyntheticProblem, latent: np.ndarray
) -> np.ndarray:
    if problem.transforms is None:
        return latent
    x, _ = apply_inverse_transforms(problem.transforms, latent)
    return x


def sample(problem: SyntheticProblem, n1: int, n2: int, seed: int) -> LabeledDataset:
    """Draw n1 class-1 rows followed by n2 class-2 rows.

    Latent vectors come from a Cholesky transform of standard normal
    draws; when the problem carries monotone maps each feature is the
    inverse map of its latent coordinate, so the latent scores of the
    output are exactly Gaussian.  Deterministic given the seed.
    """
    if n1 < 2 or n2 < 2:
        raise TooFewSamplesError(f"need at least 2 rows per class, got {n1} and {n2}")
    th = problem.theta
    l1 = _cholesky_factor(th.sigma1, "sigma1")
    l2 = _cholesky_factor(th.sigma2, "sigma2")
    rng = np.random.default_rng(seed)
    latent = np.vstack(
        [
            th.mu1 + rng.standard_normal((n1, th.p)) @ l1.T,
            th.mu2 + rng.standard_normal((n2, th.p)) @ l2.T,
        ]
    )
    labels = np.r_[np.ones(n1, dtype=np.int64), np.full(n2, 2, dtype=np.int64)]
    return LabeledDataset(_emit_features(problem, latent), labels)


def sample_mixture(problem: SyntheticProblem, n: int, seed: int) -> LabeledDataset:
    """Draw n rows with labels sampled first from the prior.

    Each row's label is Bernoulli (class 2 with probability ``pi2``),
    then its feature vector is drawn from that class.
    """
    if n < 1:
        raise ValidationError(f"need at least 1 row, got {n}")
    th = problem.theta
    l1 = _cholesky_factor(th.sigma1, "sigma1")
    l2 = _cholesky_factor(th.sigma2, "sigma2")
    rng = np.random.default_rng(seed)
    labels = np.where(rng.random(n) < th.pi2, 2, 1).astype(np.int64)
    z = rng.standard_normal((n, th.p))
    latent = np.empty_like(z)
    is1 = labels == 1
    latent[is1] = th.mu1 + z[is1] @ l1.T
    latent[~is1] = th.mu2 + z[~is1] @ l2.T
    return LabeledDataset(_emit_features(problem, latent), labels)
