"""Replicated classification experiments and their plumbing.

The harness turns a declarative :class:`ExperimentSpec` into an error
table: per replication it generates (or splits) data, tunes the two
constraint radii by stratified cross-validation on a multiplier grid,
fits the requested methods, and scores them on a fresh mixture test
draw.  Also here: the plug-in baselines, CSV ingestion with t-statistic
feature screening, versioned JSON model serialization, and table
emission/parsing.

Determinism: every random stream is keyed as
``default_rng([seed, stream, replication, ...])`` with fixed stream
codes (0 train, 1 test, 2 tuning folds, 3 problem construction, 4
real-data splits), so repeated runs are bit-identical and test draws
never depend on the training sizes.  Replications may run on a thread
pool (``SDAR_THREADS``, 0 = auto) without affecting results:
aggregation walks replication order after all workers finish.
Runtimes are recorded on the in-memory table only; emitted files
contain no timing so equal-seed runs stay byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from sdar.classify import (
    NonPositiveEigenvalueError,
    MultigroupModel,
    classify_oracle,
    classify_sdar,
)
from sdar.copula import (
    CopulaModel,
    DegenerateVarianceError,
    WinsorizedEcdf,
    classify_csdar,
    csdar_from_solutions,
    rank_statistics,
)
from sdar.core import (
    LabeledDataset,
    NumericalError,
    SdarError,
    SdarModel,
    SolverConfig,
    TooFewSamplesError,
    ValidationError,
    ensure_valid_dataset,
)
from sdar.datagen import (
    SyntheticProblem,
    apply_transforms,
    gen_copula_model,
    gen_impossibility,
    gen_model,
    sample,
    sample_mixture,
)
from sdar.estimate import (
    FitConfig,
    class_moments,
    default_scale,
    sdar_from_solutions,
    solve_direction_program,
    solve_graph_program,
)

__all__ = [
    "AllCandidatesInvalidError",
    "CorruptModelError",
    "ErrorRow",
    "ErrorTable",
    "ExperimentSpec",
    "IoError",
    "MissingLabelColumnError",
    "NonNumericCellError",
    "ParseError",
    "SchemaVersionMismatchError",
    "emit_table",
    "fit_lda_plugin",
    "fit_qda_plugin",
    "ingest_csv",
    "lambda_candidates",
    "load_model",
    "load_spec",
    "parse_table",
    "run_experiment",
    "save_model",
    "save_spec",
    "screen_features",
    "tune_lambdas",
    "welch_t_statistics",
]

SCHEMA_VERSION = 1

METHODS = ("sdar", "csdar", "lda_plugin", "qda_plugin", "oracle")

SYNTHETIC_PROBLEMS = (
    "model1",
    "model2",
    "model3",
    "model4",
    "model5",
    "model6",
    "impossibility1",
    "impossibility2",
)

# Solver settings for harness runs: looser gap than the library default,
# which the tuning loop tolerates because misclassification counts are
# insensitive to the last digits of the solutions.
BENCH_SOLVER = SolverConfig(duality_gap_tol=1e-4)


class IoError(SdarError):
    """Reading or writing a file failed at the OS level."""


class SchemaVersionMismatchError(SdarError):
    """A serialized document declares a schema this build does not speak."""


class CorruptModelError(SdarError):
    """A serialized document is not valid JSON or misses required fields."""


class AllCandidatesInvalidError(NumericalError):
    """Every grid candidate failed to solve or produce a usable rule."""


class ParseError(ValidationError):
    """A CSV cell or row could not be parsed.

    ``row`` counts data rows from 1 (the header is row 0); ``col`` counts
    file columns from 1, including the label column.
    """

    def __init__(self, message: str, row: int, col: int):
        super().__init__(message)
        self.row = int(row)
        self.col = int(col)


class NonNumericCellError(ParseError):
    """A feature or label cell does not parse as a number."""


class MissingLabelColumnError(ValidationError):
    """The header has no column with the requested label name."""


# ---------------------------------------------------------------------------
# Experiment specification
# ---------------------------------------------------------------------------


@dataclass
class ExperimentSpec:
    """Declarative description of one experiment.

    ``problem`` names a synthetic family (``model1`` .. ``model6``, or the
    closed-form ``impossibility1``/``impossibility2`` settings) with
    dimension ``p``, or the literal ``"csv"`` with ``csv_path`` and
    ``label_column`` set, in which case evaluation is repeated stratified
    k-fold cross-validation on the file's rows and ``n1``/``n2``/``n_test``
    are ignored.

    ``lambda_grid1``/``lambda_grid2`` hold positive multipliers ``k``; a
    candidate radius is ``k / grid_divisor * sqrt(log p / n)`` with
    ``n = min(n1, n2)`` of the full training split.
    """

    problem: str
    p: int | None = None
    n1: int = 200
    n2: int = 200
    n_test: int = 200
    replications: int = 100
    lambda_grid1: tuple[float, ...] = tuple(float(k) for k in range(1, 16))
    lambda_grid2: tuple[float, ...] = tuple(float(k) for k in range(1, 16))
    grid_divisor: float = 2.0
    cv_folds: int = 5
    seed: int = 0
    methods: tuple[str, ...] = ("sdar", "oracle")
    csv_path: str | None = None
    label_column: str | None = None
    screen_top_k: int | None = None

    def __post_init__(self):
        self.lambda_grid1 = tuple(float(k) for k in self.lambda_grid1)
        self.lambda_grid2 = tuple(float(k) for k in self.lambda_grid2)
        self.methods = tuple(str(m) for m in self.methods)
        if self.problem not in SYNTHETIC_PROBLEMS and self.problem != "csv":
            raise ValidationError(f"unknown problem {self.problem!r}")
        if self.problem == "csv":
            if not self.csv_path or not self.label_column:
                raise ValidationError("csv problems need csv_path and label_column")
            if "oracle" in self.methods:
                raise ValidationError("oracle needs known parameters; not available on csv data")
        else:
            if self.p is None or self.p < 1:
                raise ValidationError("synthetic problems need a positive dimension p")
            # mirror the generators' minima so bad specs fail before any work
            if self.problem in ("model1", "model2", "model3") and self.p < 30:
                raise ValidationError("model problems use the default sparsity; need p >= 30")
            if self.problem in ("model4", "model5", "model6") and self.p < 85:
                raise ValidationError("transformed model problems need p >= 85")
            if self.problem == "impossibility2" and self.p % 2 != 0:
                raise ValidationError("impossibility2 needs an even dimension")
            if self.n1 < 2 or self.n2 < 2:
                raise ValidationError("training sizes must be at least 2 per class")
            if self.n_test < 1:
                raise ValidationError("n_test must be at least 1")
        if self.replications < 1:
            raise ValidationError("replications must be at least 1")
        if not self.lambda_grid1 or not self.lambda_grid2:
            raise ValidationError("lambda grids must be nonempty")
        if any(not (math.isfinite(k) and k > 0) for k in self.lambda_grid1 + self.lambda_grid2):
            raise ValidationError("grid multipliers must be finite and positive")
        if not (math.isfinite(self.grid_divisor) and self.grid_divisor > 0):
            raise ValidationError("grid_divisor must be finite and positive")
        if self.cv_folds < 2:
            raise ValidationError("cv_folds must be at least 2")
        if not self.methods:
            raise ValidationError("methods must be nonempty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValidationError(f"unknown methods {unknown!r}; choose from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ValidationError("methods must be distinct")
        if self.screen_top_k is not None and self.screen_top_k < 1:
            raise ValidationError("screen_top_k must be positive when given")


def lambda_candidates(
    grid: tuple[float, ...], divisor: float, p: int, n1: int, n2: int
) -> list[float]:
    """Radius values k/divisor * sqrt(log p / n), n = min(n1, n2)."""
    scale = default_scale(p, n1, n2)
    return [k / divisor * scale for k in grid]


# ---------------------------------------------------------------------------
# Result table
# ---------------------------------------------------------------------------


@dataclass
class ErrorRow:
    """One (model, p, method) cell of an error table.

    ``replications`` counts successful replications; ``failed`` the ones
    whose fit raised, which are reported, never imputed.  ``mean_error``
    and ``std_error`` are None when too few replications succeeded to
    define them.  ``failed`` and ``runtime_seconds`` do not take part in
    equality so that emit/parse round trips compare clean.
    """

    model: str
    p: int
    method: str
    mean_error: float | None
    std_error: float | None
    replications: int
    failed: int = field(default=0, compare=False)
    runtime_seconds: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.mean_error is not None and not (0.0 <= self.mean_error <= 1.0):
            raise ValidationError(f"mean_error must lie in [0, 1], got {self.mean_error!r}")
        if self.std_error is not None and self.std_error < 0.0:
            raise ValidationError(f"std_error must be >= 0, got {self.std_error!r}")
        if self.replications < 0 or self.failed < 0:
            raise ValidationError("replication counts cannot be negative")


@dataclass
class ErrorTable:
    rows: list[ErrorRow]

    def row(self, method: str) -> ErrorRow:
        """The unique row for a method; raises KeyError when absent."""
        matches = [r for r in self.rows if r.method == method]
        if len(matches) != 1:
            raise KeyError(f"{len(matches)} rows for method {method!r}")
        return matches[0]


def _format_number(x: float | None) -> str:
    # repr of a float is the shortest string that parses back bit-identically
    return "" if x is None else repr(float(x))


def _parse_number(s: str) -> float | None:
    s = s.strip()
    return None if s == "" else float(s)


def emit_table(table: ErrorTable, format: str = "csv") -> str:
    """Render a table; columns model, p, method, mean, sd, reps."""
    header = ("model", "p", "method", "mean", "sd", "reps")
    cells = [
        (
            r.model,
            str(r.p),
            r.method,
            _format_number(r.mean_error),
            _format_number(r.std_error),
            str(r.replications),
        )
        for r in table.rows
    ]
    if format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(cells)
        return out.getvalue()
    if format == "markdown":
        lines = [
            "| " + " | ".join(header) + " |",
            "|" + "|".join(" --- " for _ in header) + "|",
        ]
        for row in cells:
            lines.append("| " + " | ".join(cell if cell else " " for cell in row) + " |")
        return "\n".join(lines) + "\n"
    raise ValidationError(f"unknown table format {format!r}")


def parse_table(text: str) -> ErrorTable:
    """Inverse of emit_table for both formats (format auto-detected)."""
    stripped = text.strip()
    rows: list[ErrorRow] = []
    if not stripped:
        raise ValidationError("empty table text")
    if stripped.startswith("|"):
        lines = [ln for ln in stripped.splitlines() if ln.strip()]
        body = lines[2:]  # header and separator
        records = [[c.strip() for c in ln.strip().strip("|").split("|")] for ln in body]
    else:
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if [h.strip() for h in header] != ["model", "p", "method", "mean", "sd", "reps"]:
            raise ValidationError(f"unexpected table header {header!r}")
        records = [row for row in reader if row]
    for rec in records:
        if len(rec) != 6:
            raise ValidationError(f"expected 6 columns, got {rec!r}")
        rows.append(
            ErrorRow(
                model=rec[0],
                p=int(rec[1]),
                method=rec[2],
                mean_error=_parse_number(rec[3]),
                std_error=_parse_number(rec[4]),
                replications=int(rec[5]),
            )
        )
    return ErrorTable(rows=rows)


# ---------------------------------------------------------------------------
# Cross-validation tuning
# ---------------------------------------------------------------------------


def _stratified_folds(
    labels: np.ndarray, folds: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Validation index sets, one per fold, stratified by class."""
    chunks: list[list[np.ndarray]] = [[] for _ in range(folds)]
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        if idx.size < folds:
            raise ValidationError(
                f"class {int(cls)} has {idx.size} rows; needs at least one per fold"
            )
        for f, part in enumerate(np.array_split(idx, folds)):
            chunks[f].append(part)
    return [np.sort(np.concatenate(parts)) for parts in chunks]


def _subset(data: LabeledDataset, idx: np.ndarray) -> LabeledDataset:
    return LabeledDataset(
        data.features[idx],
        data.labels[idx],
        feature_names=data.feature_names,
        feature_indices=data.feature_indices,
    )


_SOLVE_FAILURES = (
    NumericalError,
    DegenerateVarianceError,
    TooFewSamplesError,
)


def tune_lambdas(
    data: LabeledDataset,
    spec: ExperimentSpec,
    method: str = "sdar",
    cv_seed=None,
) -> tuple[float, float]:
    """Pick (lambda1, lambda2) by stratified k-fold cross-validation.

    The two programs are decoupled, so each fold solves once per lambda1
    and once per lambda2 and every grid pair is assembled from the cached
    solutions.  Candidates that fail to solve, fail to converge, or make
    the log-det term undefined in any fold are excluded; ties in pooled
    validation misclassification go to the larger lambda1 + lambda2, then
    the larger lambda1.  A single-pair grid is returned without any CV.
    """
    if method not in ("sdar", "csdar"):
        raise ValidationError(f"tuning applies to sdar or csdar, got {method!r}")
    ensure_valid_dataset(data, expect_two_classes=True)
    n1 = int(np.sum(data.labels == 1))
    n2 = int(np.sum(data.labels == 2))
    cands1 = lambda_candidates(spec.lambda_grid1, spec.grid_divisor, data.p, n1, n2)
    cands2 = lambda_candidates(spec.lambda_grid2, spec.grid_divisor, data.p, n1, n2)
    if len(cands1) == 1 and len(cands2) == 1:
        return cands1[0], cands2[0]

    rng = np.random.default_rng(cv_seed if cv_seed is not None else [spec.seed, 2])
    fold_sets = _stratified_folds(data.labels, spec.cv_folds, rng)
    all_idx = np.arange(data.n)

    valid1 = [True] * len(cands1)
    valid2 = [True] * len(cands2)
    counts = np.zeros((len(cands1), len(cands2)), dtype=np.int64)

    for val_idx in fold_sets:
        train = _subset(data, np.setdiff1d(all_idx, val_idx))
        val = _subset(data, val_idx)
        if method == "sdar":
            m1 = class_moments(train, 1)
            m2 = class_moments(train, 2)
            sig1, sig2 = m1.sigma_hat, m2.sigma_hat
            delta = m2.mu_hat - m1.mu_hat
        else:
            stats = rank_statistics(train)
            sig1, sig2 = stats.sigma_tilde1, stats.sigma_tilde2
            delta = stats.mu2_hat

        base = FitConfig(lambda1=0.0, lambda2=0.0, solver=BENCH_SOLVER)
        graph_parts: dict[int, np.ndarray] = {}
        for i, lam1 in enumerate(cands1):
            if not valid1[i]:
                continue
            try:
                d_hat, report = solve_graph_program(sig1, sig2, replace(base, lambda1=lam1))
                if not report.converged:
                    raise NumericalError("graph program did not converge")
            except _SOLVE_FAILURES:
                valid1[i] = False
                continue
            graph_parts[i] = d_hat
        direction_parts: dict[int, np.ndarray] = {}
        for j, lam2 in enumerate(cands2):
            if not valid2[j]:
                continue
            try:
                beta_hat, report = solve_direction_program(sig2, delta, replace(base, lambda2=lam2))
                if not report.converged:
                    raise NumericalError("direction program did not converge")
            except _SOLVE_FAILURES:
                valid2[j] = False
                continue
            direction_parts[j] = beta_hat

        for i, d_hat in graph_parts.items():
            if not valid1[i]:
                continue
            for j, beta_hat in direction_parts.items():
                if not valid2[j]:
                    continue
                try:
                    if method == "sdar":
                        model = sdar_from_solutions(m1, m2, d_hat, beta_hat, cands1[i], cands2[j])
                        got = classify_sdar(val.features, model)
                    else:
                        model = csdar_from_solutions(stats, d_hat, beta_hat, cands1[i], cands2[j])
                        got = classify_csdar(val.features, model)
                except NonPositiveEigenvalueError:
                    # the log-det term depends on lambda1's solution only
                    valid1[i] = False
                    break
                counts[i, j] += int(np.sum(got != val.labels))

    best: tuple[float, float, float] | None = None
    best_pair: tuple[float, float] | None = None
    for i, lam1 in enumerate(cands1):
        if not valid1[i]:
            continue
        for j, lam2 in enumerate(cands2):
            if not valid2[j]:
                continue
            key = (float(counts[i, j]), -(lam1 + lam2), -lam1)
            if best is None or key < best:
                best = key
                best_pair = (lam1, lam2)
    if best_pair is None:
        raise AllCandidatesInvalidError(
            "no grid candidate solved and converged in every fold"
        )
    return best_pair


# ---------------------------------------------------------------------------
# Plug-in baselines
# ---------------------------------------------------------------------------


def _inverse_and_logdet(sigma: np.ndarray, allow_ridge: bool) -> tuple[np.ndarray, float]:
    """Inverse (or clipped pseudo-inverse) and matching (pseudo) log-det.

    With ``allow_ridge`` a 1e-6 ridge is added and the matrix inverted
    exactly; otherwise eigenvalues at or below 1e-6 times the largest are
    dropped and the log-det is the sum over the retained ones.
    """
    p = sigma.shape[0]
    if allow_ridge:
        ridged = sigma + 1e-6 * np.eye(p)
        w, v = np.linalg.eigh(ridged)
        if w[0] <= 0.0:
            raise NumericalError("ridged covariance is not positive definite")
        inv = (v / w) @ v.T
        return 0.5 * (inv + inv.T), float(np.sum(np.log(w)))
    w, v = np.linalg.eigh(sigma)
    cutoff = 1e-6 * max(float(w[-1]), 0.0)
    keep = w > cutoff
    if not np.any(keep):
        raise NumericalError("sample covariance has no usable eigenvalues")
    vk = v[:, keep]
    inv = (vk / w[keep]) @ vk.T
    return 0.5 * (inv + inv.T), float(np.sum(np.log(w[keep])))


def fit_qda_plugin(data: LabeledDataset) -> SdarModel:
    """Quadratic plug-in rule: sample moments dropped into the exact formula.

    Per-class covariances are inverted with a 1e-6 ridge when p is smaller
    than both class sizes, else by eigenvalue-clipped pseudo-inverse with a
    pseudo log-det over the retained spectrum.  The prior constant is the
    full 2 log(pi1_hat/pi2_hat) of the exact-parameter statistic.
    """
    ensure_valid_dataset(data, expect_two_classes=True)
    m1 = class_moments(data, 1)
    m2 = class_moments(data, 2)
    allow_ridge = data.p < min(m1.n_k, m2.n_k)
    om1, ld1 = _inverse_and_logdet(m1.sigma_hat, allow_ridge)
    om2, ld2 = _inverse_and_logdet(m2.sigma_hat, allow_ridge)
    d_hat = om2 - om1
    return SdarModel(
        mu1_hat=m1.mu_hat,
        mu2_hat=m2.mu_hat,
        d_hat=0.5 * (d_hat + d_hat.T),
        beta_hat=om2 @ (m2.mu_hat - m1.mu_hat),
        logdet_term=ld1 - ld2,
        log_prior_ratio=2.0 * math.log(m1.pi_hat / m2.pi_hat),
    )


def fit_lda_plugin(data: LabeledDataset) -> SdarModel:
    """Linear plug-in rule with the count-weighted pooled covariance.

    The pooled matrix is inverted with a 1e-6 ridge when p is below the
    total sample size minus one, else by eigenvalue-clipped pseudo-inverse.
    Equal class covariances make the quadratic and log-det terms vanish.
    """
    ensure_valid_dataset(data, expect_two_classes=True)
    m1 = class_moments(data, 1)
    m2 = class_moments(data, 2)
    n = m1.n_k + m2.n_k
    pooled = (m1.n_k / n) * m1.sigma_hat + (m2.n_k / n) * m2.sigma_hat
    om, _ = _inverse_and_logdet(pooled, allow_ridge=data.p < n - 1)
    return SdarModel(
        mu1_hat=m1.mu_hat,
        mu2_hat=m2.mu_hat,
        d_hat=np.zeros((data.p, data.p)),
        beta_hat=om @ (m2.mu_hat - m1.mu_hat),
        logdet_term=0.0,
        log_prior_ratio=2.0 * math.log(m1.pi_hat / m2.pi_hat),
    )


def _impossibility_plugin(problem: SyntheticProblem, data: LabeledDataset) -> SdarModel:
    """Plug-in rule for the closed-form settings.

    Only the parameters each setting treats as unknown are estimated:
    setting 1 plugs sample means into the known-identity-covariance rule;
    setting 2 plugs per-feature sample variances (computed around the known
    means, 1/n divisor) into the known-means diagonal rule.  Priors are
    known and equal, so the prior constant vanishes.
    """
    p = problem.p
    x1 = data.features[data.labels == 1]
    x2 = data.features[data.labels == 2]
    if problem.model_id == 1:
        mu1 = x1.mean(axis=0)
        mu2 = x2.mean(axis=0)
        return SdarModel(
            mu1_hat=mu1,
            mu2_hat=mu2,
            d_hat=np.zeros((p, p)),
            beta_hat=mu2 - mu1,
            logdet_term=0.0,
            log_prior_ratio=0.0,
        )
    theta = problem.theta
    s1 = np.mean((x1 - theta.mu1) ** 2, axis=0)
    s2 = np.mean((x2 - theta.mu2) ** 2, axis=0)
    if np.any(s1 == 0.0) or np.any(s2 == 0.0):
        raise NumericalError("a feature has zero sample variance")
    return SdarModel(
        mu1_hat=theta.mu1,
        mu2_hat=theta.mu2,
        d_hat=np.diag(1.0 / s2 - 1.0 / s1),
        beta_hat=(theta.mu2 - theta.mu1) / s2,
        logdet_term=float(np.sum(np.log(s1)) - np.sum(np.log(s2))),
        log_prior_ratio=0.0,
    )


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------


def _worker_count() -> int:
    raw = os.environ.get("SDAR_THREADS", "0")
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValidationError(f"SDAR_THREADS must be an integer, got {raw!r}") from exc
    if value < 0:
        raise ValidationError(f"SDAR_THREADS must be >= 0, got {value}")
    if value == 0:
        return os.cpu_count() or 1
    return value


def _generate_problem(spec: ExperimentSpec, rep: int) -> SyntheticProblem:
    key = [spec.seed, 3, rep]
    name = spec.problem
    if name.startswith("impossibility"):
        return gen_impossibility(int(name[-1]), spec.p, seed=key)
    model_id = int(name[-1])
    if model_id <= 3:
        return gen_model(model_id, spec.p, seed=key)
    return gen_copula_model(model_id, spec.p, seed=key)


def _fit_sdar_checked(train: LabeledDataset, lam1: float, lam2: float) -> SdarModel:
    m1 = class_moments(train, 1)
    m2 = class_moments(train, 2)
    cfg = FitConfig(lambda1=lam1, lambda2=lam2, solver=BENCH_SOLVER)
    d_hat, rep1 = solve_graph_program(m1.sigma_hat, m2.sigma_hat, cfg)
    beta_hat, rep2 = solve_direction_program(m2.sigma_hat, m2.mu_hat - m1.mu_hat, cfg)
    if not (rep1.converged and rep2.converged):
        raise NumericalError("final fit did not converge at the tuned radii")
    return sdar_from_solutions(m1, m2, d_hat, beta_hat, lam1, lam2)


def _fit_csdar_checked(train: LabeledDataset, lam1: float, lam2: float) -> CopulaModel:
    stats = rank_statistics(train)
    cfg = FitConfig(lambda1=lam1, lambda2=lam2, solver=BENCH_SOLVER)
    d_hat, rep1 = solve_graph_program(stats.sigma_tilde1, stats.sigma_tilde2, cfg)
    beta_hat, rep2 = solve_direction_program(stats.sigma_tilde2, stats.mu2_hat, cfg)
    if not (rep1.converged and rep2.converged):
        raise NumericalError("final fit did not converge at the tuned radii")
    return csdar_from_solutions(stats, d_hat, beta_hat, lam1, lam2)


def _predict_method(
    method: str,
    spec: ExperimentSpec,
    problem: SyntheticProblem,
    train: LabeledDataset,
    test_features: np.ndarray,
    rep: int,
) -> np.ndarray:
    if method == "oracle":
        latent = (
            apply_transforms(problem.transforms, test_features)
            if problem.transforms is not None
            else test_features
        )
        return classify_oracle(latent, problem.theta)
    if method == "sdar":
        lam1, lam2 = tune_lambdas(train, spec, method="sdar", cv_seed=[spec.seed, 2, rep, 0])
        return classify_sdar(test_features, _fit_sdar_checked(train, lam1, lam2))
    if method == "csdar":
        lam1, lam2 = tune_lambdas(train, spec, method="csdar", cv_seed=[spec.seed, 2, rep, 1])
        return classify_csdar(test_features, _fit_csdar_checked(train, lam1, lam2))
    if method == "lda_plugin":
        return classify_sdar(test_features, fit_lda_plugin(train))
    if method == "qda_plugin":
        if spec.problem.startswith("impossibility"):
            model = _impossibility_plugin(problem, train)
        else:
            model = fit_qda_plugin(train)
        return classify_sdar(test_features, model)
    raise ValidationError(f"unknown method {method!r}")


def _run_synthetic_rep(spec: ExperimentSpec, rep: int) -> dict[str, tuple]:
    problem = _generate_problem(spec, rep)
    train = sample(problem, spec.n1, spec.n2, seed=[spec.seed, 0, rep])
    test = sample_mixture(problem, spec.n_test, seed=[spec.seed, 1, rep])
    out: dict[str, tuple] = {}
    for method in spec.methods:
        start = time.perf_counter()
        try:
            got = _predict_method(method, spec, problem, train, test.features, rep)
            miscls = int(np.sum(got != test.labels))
            out[method] = (miscls, spec.n_test, time.perf_counter() - start, None)
        except _SOLVE_FAILURES as exc:
            out[method] = (None, spec.n_test, time.perf_counter() - start, exc)
    return out


def _aggregate(
    spec: ExperimentSpec, per_rep: list[dict[str, tuple]], p_reported: int
) -> ErrorTable:
    rows = []
    for method in spec.methods:
        counts = []
        runtime = 0.0
        failed = 0
        for rep_result in per_rep:
            miscls, denom, seconds, err = rep_result[method]
            runtime += seconds
            if err is not None:
                failed += 1
            else:
                counts.append((miscls, denom))
        reps = len(counts)
        if reps == 0:
            mean = None
            std = None
        else:
            total_err = sum(c for c, _ in counts)
            total_n = sum(d for _, d in counts)
            mean = total_err / total_n
            fractions = np.array([c / d for c, d in counts])
            std = float(np.std(fractions, ddof=1)) if reps >= 2 else None
        rows.append(
            ErrorRow(
                model=spec.problem,
                p=p_reported,
                method=method,
                mean_error=mean,
                std_error=std,
                replications=reps,
                failed=failed,
                runtime_seconds=runtime,
            )
        )
    return ErrorTable(rows=rows)


def run_experiment(spec: ExperimentSpec) -> ErrorTable:
    """Run all replications of a spec and aggregate an error table.

    Synthetic problems draw a fresh problem, training set, and mixture
    test set per replication.  A method that raises a numerical error in
    a replication loses that replication (counted in ``failed``) without
    aborting the table.  Deterministic given ``spec.seed``; the test
    stream does not depend on the training sizes, so error columns are
    comparable across n at fixed seed.
    """
    if spec.problem == "csv":
        return _run_csv_experiment(spec)
    reps = list(range(spec.replications))
    workers = min(_worker_count(), len(reps))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(lambda r: _run_synthetic_rep(spec, r), reps))
    else:
        per_rep = [_run_synthetic_rep(spec, r) for r in reps]
    return _aggregate(spec, per_rep, spec.p)


def _run_csv_experiment(spec: ExperimentSpec) -> ErrorTable:
    """Repeated stratified k-fold evaluation on a CSV dataset.

    Each replication reshuffles the folds; feature screening runs inside
    every training fold so no validation information leaks into the
    selection, and validation folds are restricted to the selected
    columns.
    """
    data = ingest_csv(spec.csv_path, spec.label_column, screen_top_k=None)
    per_rep: list[dict[str, tuple]] = []
    for rep in range(spec.replications):
        rng = np.random.default_rng([spec.seed, 4, rep])
        fold_sets = _stratified_folds(data.labels, spec.cv_folds, rng)
        all_idx = np.arange(data.n)
        totals = {m: 0 for m in spec.methods}
        errors: dict[str, Exception | None] = {m: None for m in spec.methods}
        runtimes = {m: 0.0 for m in spec.methods}
        for fold, val_idx in enumerate(fold_sets):
            train = _subset(data, np.setdiff1d(all_idx, val_idx))
            val = _subset(data, val_idx)
            if spec.screen_top_k is not None:
                train = screen_features(train, spec.screen_top_k)
                keep = list(train.feature_indices)
                val = LabeledDataset(
                    val.features[:, keep],
                    val.labels,
                    feature_names=train.feature_names,
                    feature_indices=train.feature_indices,
                )
            for method in spec.methods:
                if errors[method] is not None:
                    continue
                start = time.perf_counter()
                try:
                    if method == "sdar":
                        lam1, lam2 = tune_lambdas(
                            train, spec, method="sdar", cv_seed=[spec.seed, 2, rep, fold, 0]
                        )
                        got = classify_sdar(val.features, _fit_sdar_checked(train, lam1, lam2))
                    elif method == "csdar":
                        lam1, lam2 = tune_lambdas(
                            train, spec, method="csdar", cv_seed=[spec.seed, 2, rep, fold, 1]
                        )
                        got = classify_csdar(val.features, _fit_csdar_checked(train, lam1, lam2))
                    elif method == "lda_plugin":
                        got = classify_sdar(val.features, fit_lda_plugin(train))
                    elif method == "qda_plugin":
                        got = classify_sdar(val.features, fit_qda_plugin(train))
                    else:
                        raise ValidationError(f"unknown method {method!r}")
                    totals[method] += int(np.sum(got != val.labels))
                except _SOLVE_FAILURES as exc:
                    errors[method] = exc
                runtimes[method] += time.perf_counter() - start
        per_rep.append(
            {
                m: (
                    (totals[m], data.n, runtimes[m], None)
                    if errors[m] is None
                    else (None, data.n, runtimes[m], errors[m])
                )
                for m in spec.methods
            }
        )
    p_reported = spec.screen_top_k if spec.screen_top_k is not None else data.p
    return _aggregate(spec, per_rep, p_reported)


# ---------------------------------------------------------------------------
# CSV ingestion and screening
# ---------------------------------------------------------------------------


def ingest_csv(
    path: str, label_column: str, screen_top_k: int | None = None
) -> LabeledDataset:
    """Load a labeled dataset from a headed CSV file.

    All non-label cells must be numeric; labels must be integers.  Cell
    errors report 1-based data-row and file-column coordinates.  With
    ``screen_top_k`` the loaded dataset is passed through
    :func:`screen_features`.
    """
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None:
                raise ParseError("file has no header row", row=0, col=0)
            header = [h.strip() for h in header]
            if label_column not in header:
                raise MissingLabelColumnError(
                    f"no column named {label_column!r}; header has {header}"
                )
            label_idx = header.index(label_column)
            width = len(header)
            feature_cols = [c for c in range(width) if c != label_idx]
            features: list[list[float]] = []
            labels: list[int] = []
            for r, record in enumerate(reader, start=1):
                if len(record) != width:
                    raise ParseError(
                        f"row {r} has {len(record)} cells, expected {width}",
                        row=r,
                        col=min(len(record), width) + 1,
                    )
                parsed = []
                for c in feature_cols:
                    try:
                        parsed.append(float(record[c]))
                    except ValueError:
                        raise ParseError(
                            f"non-numeric cell {record[c]!r} at row {r}, column {c + 1}",
                            row=r,
                            col=c + 1,
                        ) from None
                raw_label = record[label_idx]
                try:
                    as_float = float(raw_label)
                except ValueError:
                    raise ParseError(
                        f"non-numeric label {raw_label!r} at row {r}, column {label_idx + 1}",
                        row=r,
                        col=label_idx + 1,
                    ) from None
                label = int(as_float)
                if label != as_float:
                    raise ParseError(
                        f"label {raw_label!r} at row {r} is not an integer",
                        row=r,
                        col=label_idx + 1,
                    )
                features.append(parsed)
                labels.append(label)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not features:
        raise ParseError("file has a header but no data rows", row=1, col=1)
    data = LabeledDataset(
        np.asarray(features, dtype=np.float64),
        np.asarray(labels, dtype=np.int64),
        feature_names=tuple(header[c] for c in feature_cols),
    )
    if screen_top_k is not None:
        data = screen_features(data, screen_top_k)
    return data


def welch_t_statistics(data: LabeledDataset) -> np.ndarray:
    """Two-sample t statistic per feature with unpooled variances.

    Features with zero variance in both classes score 0 when the means
    agree (no information) and +inf when they differ (perfect separation,
    ranked first).
    """
    ensure_valid_dataset(data, expect_two_classes=True)
    x1 = data.features[data.labels == 1]
    x2 = data.features[data.labels == 2]
    if x1.shape[0] < 2 or x2.shape[0] < 2:
        raise TooFewSamplesError("need at least 2 rows per class for variances")
    diff = x2.mean(axis=0) - x1.mean(axis=0)
    se2 = x1.var(axis=0, ddof=1) / x1.shape[0] + x2.var(axis=0, ddof=1) / x2.shape[0]
    t = np.empty(data.p)
    degenerate = se2 == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t[~degenerate] = diff[~degenerate] / np.sqrt(se2[~degenerate])
    t[degenerate] = np.where(diff[degenerate] == 0.0, 0.0, np.inf)
    return t


def screen_features(data: LabeledDataset, top_k: int) -> LabeledDataset:
    """Keep the top_k features by absolute t statistic, original order.

    Rank ties keep the earlier column.  Kept positions are recorded in
    ``feature_indices`` (composed through any previous screening, so they
    always refer to the originally ingested columns); screening an
    already screened dataset with the same k is a no-op.
    """
    if top_k < 1:
        raise ValidationError(f"top_k must be positive, got {top_k}")
    if top_k >= data.p:
        kept = np.arange(data.p)
    else:
        t = np.abs(welch_t_statistics(data))
        order = np.argsort(-t, kind="stable")
        kept = np.sort(order[:top_k])
    parents = (
        np.asarray(data.feature_indices, dtype=np.int64)
        if data.feature_indices is not None
        else np.arange(data.p)
    )
    names = (
        tuple(data.feature_names[i] for i in kept)
        if data.feature_names is not None
        else None
    )
    return LabeledDataset(
        data.features[:, kept],
        data.labels,
        feature_names=names,
        feature_indices=tuple(int(parents[i]) for i in kept),
    )


# ---------------------------------------------------------------------------
# Versioned JSON serialization
# ---------------------------------------------------------------------------


def _enc(x: float) -> str:
    return "%.17g" % float(x)


def _enc_vector(a: np.ndarray) -> list[str]:
    return [_enc(v) for v in np.asarray(a, dtype=np.float64).ravel()]


def _enc_matrix(m: np.ndarray) -> list[list[str]]:
    return [[_enc(v) for v in row] for row in np.asarray(m, dtype=np.float64)]


def _dec_vector(a) -> np.ndarray:
    return np.array([float(v) for v in a], dtype=np.float64)


def _dec_matrix(m) -> np.ndarray:
    rows = [[float(v) for v in row] for row in m]
    return np.array(rows, dtype=np.float64)


def _sdar_payload(model: SdarModel) -> dict:
    return {
        "mu1_hat": _enc_vector(model.mu1_hat),
        "mu2_hat": _enc_vector(model.mu2_hat),
        "d_hat": _enc_matrix(model.d_hat),
        "beta_hat": _enc_vector(model.beta_hat),
        "logdet_term": _enc(model.logdet_term),
        "log_prior_ratio": _enc(model.log_prior_ratio),
        "lambda1": _enc(model.lambda1),
        "lambda2": _enc(model.lambda2),
    }


def _sdar_from_payload(payload: dict) -> SdarModel:
    return SdarModel(
        mu1_hat=_dec_vector(payload["mu1_hat"]),
        mu2_hat=_dec_vector(payload["mu2_hat"]),
        d_hat=_dec_matrix(payload["d_hat"]),
        beta_hat=_dec_vector(payload["beta_hat"]),
        logdet_term=float(payload["logdet_term"]),
        log_prior_ratio=float(payload["log_prior_ratio"]),
        lambda1=float(payload["lambda1"]),
        lambda2=float(payload["lambda2"]),
    )


def _ecdf_payload(e: WinsorizedEcdf) -> dict:
    return {"sorted_values": _enc_vector(e.sorted_values), "n": int(e.n)}


def _ecdf_from_payload(payload: dict) -> WinsorizedEcdf:
    return WinsorizedEcdf(
        sorted_values=_dec_vector(payload["sorted_values"]), n=int(payload["n"])
    )


def _copula_payload(model: CopulaModel) -> dict:
    return {
        "ecdf1": [_ecdf_payload(e) for e in model.ecdf1],
        "ecdf2": [_ecdf_payload(e) for e in model.ecdf2],
        "mu2_hat": _enc_vector(model.mu2_hat),
        "sigma2_jj_hat": _enc_vector(model.sigma2_jj_hat),
        "r_hat1": _enc_matrix(model.r_hat1),
        "r_hat2": _enc_matrix(model.r_hat2),
        "sigma_tilde1": _enc_matrix(model.sigma_tilde1),
        "sigma_tilde2": _enc_matrix(model.sigma_tilde2),
        "sdar": _sdar_payload(model.sdar),
        "n1": int(model.n1),
        "n2": int(model.n2),
        "r_hat_projected": [bool(model.r_hat_projected[0]), bool(model.r_hat_projected[1])],
    }


def _copula_from_payload(payload: dict) -> CopulaModel:
    return CopulaModel(
        ecdf1=[_ecdf_from_payload(e) for e in payload["ecdf1"]],
        ecdf2=[_ecdf_from_payload(e) for e in payload["ecdf2"]],
        mu2_hat=_dec_vector(payload["mu2_hat"]),
        sigma2_jj_hat=_dec_vector(payload["sigma2_jj_hat"]),
        r_hat1=_dec_matrix(payload["r_hat1"]),
        r_hat2=_dec_matrix(payload["r_hat2"]),
        sigma_tilde1=_dec_matrix(payload["sigma_tilde1"]),
        sigma_tilde2=_dec_matrix(payload["sigma_tilde2"]),
        sdar=_sdar_from_payload(payload["sdar"]),
        n1=int(payload["n1"]),
        n2=int(payload["n2"]),
        r_hat_projected=(bool(payload["r_hat_projected"][0]), bool(payload["r_hat_projected"][1])),
    )


def _multigroup_payload(model: MultigroupModel) -> dict:
    return {
        "K": int(model.K),
        "mu_hat": [_enc_vector(v) for v in model.mu_hat],
        "d_hat": [_enc_matrix(m) for m in model.d_hat],
        "beta_hat": [_enc_vector(v) for v in model.beta_hat],
        "logdet_term": [_enc(v) for v in model.logdet_term],
        "log_prior": [_enc(v) for v in model.log_prior],
    }


def _multigroup_from_payload(payload: dict) -> MultigroupModel:
    return MultigroupModel(
        K=int(payload["K"]),
        mu_hat=[_dec_vector(v) for v in payload["mu_hat"]],
        d_hat=[_dec_matrix(m) for m in payload["d_hat"]],
        beta_hat=[_dec_vector(v) for v in payload["beta_hat"]],
        logdet_term=[float(v) for v in payload["logdet_term"]],
        log_prior=[float(v) for v in payload["log_prior"]],
    )


_MODEL_KINDS = {
    SdarModel: ("sdar", _sdar_payload),
    CopulaModel: ("copula", _copula_payload),
    MultigroupModel: ("multigroup", _multigroup_payload),
}

_MODEL_LOADERS = {
    "sdar": _sdar_from_payload,
    "copula": _copula_from_payload,
    "multigroup": _multigroup_from_payload,
}


def _write_document(doc: dict, path: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(doc, handle, indent=1)
            handle.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _read_document(path: str, expected_kinds: tuple[str, ...]) -> tuple[str, dict]:
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptModelError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise CorruptModelError(f"{path} has no schema_version field")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionMismatchError(
            f"{path} uses schema {doc['schema_version']!r}; this build speaks {SCHEMA_VERSION}"
        )
    kind = doc.get("kind")
    if kind not in expected_kinds:
        raise CorruptModelError(f"{path} has kind {kind!r}, expected one of {expected_kinds}")
    payload = doc.get("payload")
    if not isinstance(payload, dict):
        raise CorruptModelError(f"{path} has no payload object")
    return kind, payload


def save_model(model: SdarModel | CopulaModel | MultigroupModel, path: str) -> None:
    """Write a fitted model as versioned JSON.

    Floats are stored as 17-significant-digit decimal strings, which load
    back to bit-identical doubles, so a round-tripped model classifies
    identically to the original.
    """
    try:
        kind, encode = _MODEL_KINDS[type(model)]
    except KeyError:
        raise ValidationError(f"cannot serialize {type(model).__name__}") from None
    _write_document({"schema_version": SCHEMA_VERSION, "kind": kind, "payload": encode(model)}, path)


def load_model(path: str) -> SdarModel | CopulaModel | MultigroupModel:
    """Read a model written by :func:`save_model`."""
    kind, payload = _read_document(path, tuple(_MODEL_LOADERS))
    try:
        return _MODEL_LOADERS[kind](payload)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptModelError(f"{path} payload is malformed: {exc}") from exc


def save_spec(spec: ExperimentSpec, path: str) -> None:
    """Write an experiment spec in the same versioned JSON dialect."""
    payload = {
        "problem": spec.problem,
        "p": spec.p,
        "n1": spec.n1,
        "n2": spec.n2,
        "n_test": spec.n_test,
        "replications": spec.replications,
        "lambda_grid1": [_enc(k) for k in spec.lambda_grid1],
        "lambda_grid2": [_enc(k) for k in spec.lambda_grid2],
        "grid_divisor": _enc(spec.grid_divisor),
        "cv_folds": spec.cv_folds,
        "seed": spec.seed,
        "methods": list(spec.methods),
        "csv_path": spec.csv_path,
        "label_column": spec.label_column,
        "screen_top_k": spec.screen_top_k,
    }
    _write_document({"schema_version": SCHEMA_VERSION, "kind": "experiment_spec", "payload": payload}, path)


def load_spec(path: str) -> ExperimentSpec:
    """Read an experiment spec written by :func:`save_spec`."""
    _, payload = _read_document(path, ("experiment_spec",))
    try:
        return ExperimentSpec(
            problem=payload["problem"],
            p=payload.get("p"),
            n1=int(payload.get("n1", 200)),
            n2=int(payload.get("n2", 200)),
            n_test=int(payload.get("n_test", 200)),
            replications=int(payload.get("replications", 100)),
            lambda_grid1=tuple(float(k) for k in payload["lambda_grid1"]),
            lambda_grid2=tuple(float(k) for k in payload["lambda_grid2"]),
            grid_divisor=float(payload.get("grid_divisor", 2.0)),
            cv_folds=int(payload.get("cv_folds", 5)),
            seed=int(payload.get("seed", 0)),
            methods=tuple(payload["methods"]),
            csv_path=payload.get("csv_path"),
            label_column=payload.get("label_column"),
            screen_top_k=payload.get("screen_top_k"),
        )
    except (KeyError, TypeError) as exc:
        raise CorruptModelError(f"{path} payload is malformed: {exc}") from exc
