"""Sparse quadratic discriminant analysis via direct difference estimation.

The package estimates the precision-difference matrix D = Omega2 - Omega1 and
the discriminating direction beta = Omega2 (mu2 - mu1) of a two-class Gaussian
(or Gaussian-copula) model by constrained l1 minimization, and classifies with
the resulting quadratic rule.  See the module docstrings for the estimators
(:mod:`sdar.estimate`), the solver (:mod:`sdar.solver`), the semiparametric
extension (:mod:`sdar.copula`), the multi-group rule (:mod:`sdar.classify`),
synthetic generators (:mod:`sdar.datagen`), and the benchmark harness with its
``sdar`` command line (:mod:`sdar.bench`, :mod:`sdar.cli`).
"""

from sdar.bench import (
    ErrorRow,
    ErrorTable,
    ExperimentSpec,
    emit_table,
    ingest_csv,
    load_model,
    load_spec,
    parse_table,
    run_experiment,
    save_model,
    save_spec,
    screen_features,
    tune_lambdas,
)
from sdar.classify import (
    MultigroupModel,
    classify_multigroup,
    classify_oracle,
    classify_sdar,
    discriminant,
    fit_multigroup,
    oracle_model,
)
from sdar.copula import CopulaModel, classify_csdar, fit_csdar, rank_statistics
from sdar.core import (
    ClassMoments,
    EmptyClassError,
    FactorizationError,
    GaussianPairParams,
    LabelDomainError,
    LabeledDataset,
    MoreThanTwoClassesError,
    NonFiniteError,
    NumericalError,
    SdarError,
    SdarModel,
    SolverConfig,
    TooFewSamplesError,
    UnknownClassError,
    ValidationError,
    Violation,
    ensure_valid_dataset,
    log_likelihood_ratio,
    validate_dataset,
)
from sdar.datagen import (
    SyntheticProblem,
    gen_copula_model,
    gen_impossibility,
    gen_model,
    sample,
    sample_mixture,
)
from sdar.estimate import (
    FitConfig,
    class_moments,
    estimate_differential_graph,
    estimate_direction,
    fit_sdar,
)

__all__ = [
    "ClassMoments",
    "CopulaModel",
    "EmptyClassError",
    "ErrorRow",
    "ErrorTable",
    "ExperimentSpec",
    "FactorizationError",
    "FitConfig",
    "GaussianPairParams",
    "LabelDomainError",
    "LabeledDataset",
    "MoreThanTwoClassesError",
    "MultigroupModel",
    "NonFiniteError",
    "NumericalError",
    "SdarError",
    "SdarModel",
    "SolverConfig",
    "SyntheticProblem",
    "TooFewSamplesError",
    "UnknownClassError",
    "ValidationError",
    "Violation",
    "class_moments",
    "classify_csdar",
    "classify_multigroup",
    "classify_oracle",
    "classify_sdar",
    "discriminant",
    "emit_table",
    "ensure_valid_dataset",
    "estimate_differential_graph",
    "estimate_direction",
    "fit_csdar",
    "fit_multigroup",
    "fit_sdar",
    "gen_copula_model",
    "gen_impossibility",
    "gen_model",
    "ingest_csv",
    "load_model",
    "load_spec",
    "log_likelihood_ratio",
    "oracle_model",
    "parse_table",
    "rank_statistics",
    "run_experiment",
    "sample",
    "sample_mixture",
    "save_model",
    "save_spec",
    "screen_features",
    "tune_lambdas",
    "validate_dataset",
]

__version__ = "0.1.0"
