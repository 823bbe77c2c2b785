"""Command-line front end.

Five subcommands: ``simulate`` runs a synthetic experiment and prints an
error table, ``bench`` does the same from a JSON experiment spec,
``fit``/``predict`` train and apply a model on CSV data, and ``tune``
reports cross-validated constraint radii without fitting.

Exit codes: 0 success, 2 invalid input (bad arguments, malformed CSV),
3 numerical failure (no usable solve), 4 file I/O or serialization
problems.
"""

from __future__ import annotations

import argparse
import csv as csv_module
import io
import sys

import numpy as np

from sdar.bench import (
    BENCH_SOLVER,
    CorruptModelError,
    ExperimentSpec,
    IoError,
    NonNumericCellError,
    ParseError,
    SchemaVersionMismatchError,
    emit_table,
    ingest_csv,
    load_model,
    load_spec,
    run_experiment,
    save_model,
    tune_lambdas,
)
from sdar.classify import classify_multigroup, classify_sdar
from sdar.copula import CopulaModel, classify_csdar
from sdar.core import NumericalError, SdarModel, ValidationError
from sdar.estimate import FitConfig, fit_sdar
from sdar.classify import MultigroupModel

_DEFAULT_GRID = tuple(float(k) for k in range(1, 16))


def _write_text(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _cmd_simulate(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    # the banded-precision models historically tune on a finer grid
    divisor = 4.0 if args.model in (2, 5) else 2.0
    spec = ExperimentSpec(
        problem=f"model{args.model}",
        p=args.p,
        n1=args.n1,
        n2=args.n2,
        n_test=args.n_test,
        replications=args.reps,
        lambda_grid1=_DEFAULT_GRID,
        lambda_grid2=_DEFAULT_GRID,
        grid_divisor=divisor,
        seed=args.seed,
        methods=methods,
    )
    table = run_experiment(spec)
    for row in table.rows:
        if row.failed:
            print(
                f"note: {row.method} failed on {row.failed} of "
                f"{row.failed + row.replications} replications",
                file=sys.stderr,
            )
    _write_text(emit_table(table, args.format), args.out)
    return 0


def _cmd_bench(args) -> int:
    spec = load_spec(args.spec)
    table = run_experiment(spec)
    for row in table.rows:
        if row.failed:
            print(
                f"note: {row.method} failed on {row.failed} of "
                f"{row.failed + row.replications} replications",
                file=sys.stderr,
            )
    _write_text(emit_table(table, args.format), args.out)
    return 0


def _tuning_spec(args, folds: int) -> ExperimentSpec:
    return ExperimentSpec(
        problem="csv",
        csv_path=args.data,
        label_column=args.label_col,
        lambda_grid1=tuple(float(k) for k in range(1, args.grid_max_k + 1)),
        lambda_grid2=tuple(float(k) for k in range(1, args.grid_max_k + 1)),
        grid_divisor=args.grid_scale,
        cv_folds=folds,
        seed=args.seed,
        methods=("sdar",),
        screen_top_k=None,
    )


def _cmd_fit(args) -> int:
    if (args.lambda1 is None) != (args.lambda2 is None):
        raise ValidationError("pass both --lambda1 and --lambda2, or neither")
    data = ingest_csv(args.data, args.label_col, screen_top_k=args.screen_top)
    if args.lambda1 is not None:
        lam1, lam2 = args.lambda1, args.lambda2
    else:
        lam1, lam2 = tune_lambdas(data, _tuning_spec(args, args.cv))
    model = fit_sdar(data, FitConfig(lambda1=lam1, lambda2=lam2, solver=BENCH_SOLVER))
    save_model(model, args.model_out)
    print(f"fitted p={model.p} lambda1={lam1:.6g} lambda2={lam2:.6g} -> {args.model_out}")
    return 0


def _cmd_tune(args) -> int:
    data = ingest_csv(args.data, args.label_col, screen_top_k=None)
    lam1, lam2 = tune_lambdas(data, _tuning_spec(args, args.folds))
    sys.stdout.write("lambda1,lambda2\n%.17g,%.17g\n" % (lam1, lam2))
    return 0


def _read_feature_csv(path: str) -> np.ndarray:
    """Numeric matrix from a headed CSV with no label column."""
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv_module.reader(handle)
            header = next(reader, None)
            if header is None:
                raise ParseError("file has no header row", row=0, col=0)
            width = len(header)
            rows = []
            for r, record in enumerate(reader, start=1):
                if len(record) != width:
                    raise ParseError(
                        f"row {r} has {len(record)} cells, expected {width}",
                        row=r,
                        col=min(len(record), width) + 1,
                    )
                parsed = []
                for c, cell in enumerate(record):
                    try:
                        parsed.append(float(cell))
                    except ValueError:
                        raise NonNumericCellError(
                            f"non-numeric cell {cell!r} at row {r}, column {c + 1}",
                            row=r,
                            col=c + 1,
                        ) from None
                rows.append(parsed)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ParseError("file has a header but no data rows", row=1, col=1)
    return np.asarray(rows, dtype=np.float64)


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    features = _read_feature_csv(args.data)
    if features.shape[1] != model.p:
        raise ValidationError(
            f"data has {features.shape[1]} features but the model expects {model.p}"
        )
    if isinstance(model, CopulaModel):
        labels = classify_csdar(features, model)
    elif isinstance(model, MultigroupModel):
        labels = classify_multigroup(features, model)
    elif isinstance(model, SdarModel):
        labels = classify_sdar(features, model)
    else:
        raise ValidationError(f"cannot predict with {type(model).__name__}")
    out = io.StringIO()
    out.write("label\n")
    for value in labels:
        out.write(f"{int(value)}\n")
    _write_text(out.getvalue(), args.out)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdar",
        description="Sparse quadratic discriminant rules via constrained l1 programs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a synthetic experiment")
    sim.add_argument("--model", type=int, required=True, choices=range(1, 7))
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--n1", type=int, default=200)
    sim.add_argument("--n2", type=int, default=200)
    sim.add_argument("--n-test", type=int, default=200, dest="n_test")
    sim.add_argument("--reps", type=int, default=100)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--methods", default="sdar,oracle")
    sim.add_argument("--out", default=None)
    sim.add_argument("--format", default="csv", choices=("csv", "markdown"))
    sim.set_defaults(func=_cmd_simulate)

    bench = sub.add_parser("bench", help="run an experiment from a JSON spec")
    bench.add_argument("--spec", required=True)
    bench.add_argument("--out", default=None)
    bench.add_argument("--format", default="csv", choices=("csv", "markdown"))
    bench.set_defaults(func=_cmd_bench)

    fit = sub.add_parser("fit", help="fit the sparse quadratic rule on CSV data")
    fit.add_argument("--data", required=True)
    fit.add_argument("--label-col", required=True, dest="label_col")
    fit.add_argument("--screen-top", type=int, default=None, dest="screen_top")
    fit.add_argument("--lambda1", type=float, default=None)
    fit.add_argument("--lambda2", type=float, default=None)
    fit.add_argument("--cv", type=int, default=5)
    fit.add_argument("--grid-scale", type=float, default=2.0, dest="grid_scale")
    fit.add_argument("--grid-max-k", type=int, default=15, dest="grid_max_k")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--model-out", required=True, dest="model_out")
    fit.set_defaults(func=_cmd_fit)

    predict = sub.add_parser("predict", help="classify rows of a feature CSV")
    predict.add_argument("--model", required=True)
    predict.add_argument("--data", required=True)
    predict.add_argument("--out", default=None)
    predict.set_defaults(func=_cmd_predict)

    tune = sub.add_parser("tune", help="cross-validate the constraint radii")
    tune.add_argument("--data", required=True)
    tune.add_argument("--label-col", required=True, dest="label_col")
    tune.add_argument("--grid-scale", type=float, default=2.0, dest="grid_scale")
    tune.add_argument("--grid-max-k", type=int, default=15, dest="grid_max_k")
    tune.add_argument("--folds", type=int, default=5)
    tune.add_argument("--seed", type=int, default=0)
    tune.set_defaults(func=_cmd_tune)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints its own message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (IoError, SchemaVersionMismatchError, CorruptModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
