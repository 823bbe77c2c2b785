"""Harness tests: specs, tables, serialization, CSV ingestion, tuning,
experiment driving, plug-in baselines, and the command line."""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.stats

from sdar.bench import (
    AllCandidatesInvalidError,
    BENCH_SOLVER,
    CorruptModelError,
    ErrorRow,
    ErrorTable,
    ExperimentSpec,
    IoError,
    MissingLabelColumnError,
    NonNumericCellError,
    ParseError,
    SchemaVersionMismatchError,
    _aggregate,
    emit_table,
    fit_lda_plugin,
    fit_qda_plugin,
    ingest_csv,
    lambda_candidates,
    load_model,
    load_spec,
    parse_table,
    run_experiment,
    save_model,
    save_spec,
    screen_features,
    tune_lambdas,
    welch_t_statistics,
)
from sdar.classify import classify_sdar, fit_multigroup
from sdar.copula import classify_csdar, fit_csdar
from sdar.core import LabeledDataset, NumericalError, SdarModel, ValidationError
from sdar.datagen import gen_model, sample
from sdar.estimate import FitConfig, class_moments, default_scale, fit_sdar


def toy_dataset(seed=0, n1=40, n2=40, p=6, shift=1.5):
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal((n1, p))
    x2 = rng.standard_normal((n2, p)) + shift
    feats = np.vstack([x1, x2])
    labels = np.r_[np.ones(n1, dtype=np.int64), np.full(n2, 2, dtype=np.int64)]
    return LabeledDataset(feats, labels)


def write_csv(path, features, labels, names=None, label_name="y"):
    p = features.shape[1]
    names = names or [f"x{j+1}" for j in range(p)]
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(names) + f",{label_name}\n")
        for row, lab in zip(features, labels):
            f.write(",".join(repr(float(v)) for v in row) + f",{int(lab)}\n")


class TestExperimentSpec:
    def test_rejects_unknown_problem(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model7", p=100)

    def test_csv_needs_path_and_label(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="csv", csv_path="x.csv")
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="csv", label_column="y")

    def test_oracle_not_available_on_csv(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(
                problem="csv", csv_path="x.csv", label_column="y", methods=("oracle",)
            )

    def test_synthetic_needs_p(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model1")

    def test_model_dimension_minima(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model1", p=29)
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model4", p=84)
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="impossibility2", p=5)
        ExperimentSpec(problem="impossibility2", p=6)
        ExperimentSpec(problem="impossibility1", p=1)

    def test_n_test_must_be_positive(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model1", p=30, n_test=0)

    def test_grid_validation(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model1", p=30, lambda_grid1=())
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model1", p=30, lambda_grid2=(1.0, -2.0))
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model1", p=30, grid_divisor=0.0)

    def test_method_validation(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model1", p=30, methods=())
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model1", p=30, methods=("sdar", "svm"))
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model1", p=30, methods=("sdar", "sdar"))

    def test_cv_and_counts(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model1", p=30, cv_folds=1)
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model1", p=30, replications=0)
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model1", p=30, n1=1)
        with pytest.raises(ValidationError):
            ExperimentSpec(problem="model1", p=30, screen_top_k=0)

    def test_candidates_formula(self):
        cands = lambda_candidates((1.0, 3.0), 2.0, 50, 80, 120)
        scale = math.sqrt(math.log(50) / 80)
        assert cands == [0.5 * scale, 1.5 * scale]

    def test_candidates_dimension_one(self):
        assert lambda_candidates((2.0,), 2.0, 1, 50, 50) == [0.0]


class TestErrorTable:
    def test_row_bounds(self):
        with pytest.raises(ValidationError):
            ErrorRow("model1", 30, "sdar", 1.2, 0.1, 10)
        with pytest.raises(ValidationError):
            ErrorRow("model1", 30, "sdar", 0.2, -0.1, 10)
        with pytest.raises(ValidationError):
            ErrorRow("model1", 30, "sdar", 0.2, 0.1, -1)

    def test_row_lookup(self):
        table = ErrorTable(rows=[ErrorRow("m", 5, "sdar", 0.1, 0.01, 10)])
        assert table.row("sdar").mean_error == 0.1
        with pytest.raises(KeyError):
            table.row("oracle")

    def test_csv_round_trip_with_missing_cells(self):
        table = ErrorTable(
            rows=[
                ErrorRow("model2", 100, "sdar", 0.141, 0.015, 100),
                ErrorRow("model2", 100, "csdar", None, None, 0, failed=5),
                ErrorRow("model2", 100, "oracle", 0.045, None, 1),
            ]
        )
        text = emit_table(table, "csv")
        assert parse_table(text) == table

    def test_markdown_round_trip(self):
        table = ErrorTable(
            rows=[
                ErrorRow("model1", 30, "sdar", 1.0 / 3.0, 0.25, 7),
                ErrorRow("model1", 30, "qda_plugin", None, None, 0),
            ]
        )
        text = emit_table(table, "markdown")
        assert text.startswith("| model | p | method | mean | sd | reps |")
        assert parse_table(text) == table

    def test_emitted_literals(self):
        table = ErrorTable(rows=[ErrorRow("model2", 100, "sdar", 0.141, 0.015, 100)])
        assert "model2,100,sdar,0.141,0.015,100" in emit_table(table, "csv")

    def test_empty_table_is_header_only(self):
        assert emit_table(ErrorTable(rows=[]), "csv") == "model,p,method,mean,sd,reps\n"
        md = emit_table(ErrorTable(rows=[]), "markdown")
        assert md.count("\n") == 2  # header and separator only

    def test_unknown_format_rejected(self):
        with pytest.raises(ValidationError):
            emit_table(ErrorTable(rows=[]), "latex")

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValidationError):
            parse_table("")
        with pytest.raises(ValidationError):
            parse_table("who,what\n1,2\n")


class TestModelSerialization:
    def test_sdar_round_trip_classifies_identically(self, tmp_path):
        data = toy_dataset(seed=1)
        model = fit_sdar(data, FitConfig(lambda1=0.4, lambda2=0.4, solver=BENCH_SOLVER))
        path = tmp_path / "model.json"
        save_model(model, str(path))
        loaded = load_model(str(path))
        pts = np.random.default_rng(2).standard_normal((100, data.p))
        assert np.array_equal(classify_sdar(pts, model), classify_sdar(pts, loaded))
        assert loaded.lambda1 == model.lambda1
        assert np.array_equal(loaded.d_hat, model.d_hat)

    def test_copula_round_trip_classifies_identically(self, tmp_path):
        data = toy_dataset(seed=3, shift=0.8)
        model = fit_csdar(data, FitConfig(lambda1=0.5, lambda2=0.5, solver=BENCH_SOLVER))
        path = tmp_path / "model.json"
        save_model(model, str(path))
        loaded = load_model(str(path))
        pts = np.random.default_rng(4).standard_normal((100, data.p))
        assert np.array_equal(classify_csdar(pts, model), classify_csdar(pts, loaded))
        assert loaded.n1 == model.n1
        assert np.array_equal(loaded.sigma_tilde2, model.sigma_tilde2)

    def test_multigroup_round_trip_classifies_identically(self, tmp_path):
        rng = np.random.default_rng(5)
        p, n = 4, 30
        feats = np.vstack([rng.standard_normal((n, p)) + k for k in range(3)])
        labels = np.repeat([1, 2, 3], n).astype(np.int64)
        model = fit_multigroup(
            LabeledDataset(feats, labels),
            FitConfig(lambda1=0.5, lambda2=0.5, solver=BENCH_SOLVER),
        )
        path = tmp_path / "model.json"
        save_model(model, str(path))
        loaded = load_model(str(path))
        from sdar.classify import classify_multigroup

        pts = rng.standard_normal((100, p))
        assert np.array_equal(classify_multigroup(pts, model), classify_multigroup(pts, loaded))

    def test_missing_field_is_corrupt(self, tmp_path):
        data = toy_dataset(seed=1)
        model = fit_sdar(data, FitConfig(lambda1=0.4, lambda2=0.4, solver=BENCH_SOLVER))
        path = tmp_path / "model.json"
        save_model(model, str(path))
        doc = json.loads(path.read_text())
        del doc["payload"]["d_hat"]
        path.write_text(json.dumps(doc))
        with pytest.raises(CorruptModelError):
            load_model(str(path))

    def test_future_schema_version_rejected(self, tmp_path):
        data = toy_dataset(seed=1)
        model = fit_sdar(data, FitConfig(lambda1=0.4, lambda2=0.4, solver=BENCH_SOLVER))
        path = tmp_path / "model.json"
        save_model(model, str(path))
        doc = json.loads(path.read_text())
        doc["schema_version"] = 2
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaVersionMismatchError):
            load_model(str(path))

    def test_not_json_is_corrupt(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("this is not json {")
        with pytest.raises(CorruptModelError):
            load_model(str(path))

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(IoError):
            load_model(str(tmp_path / "absent.json"))
        data = toy_dataset(seed=1)
        model = fit_sdar(data, FitConfig(lambda1=0.4, lambda2=0.4, solver=BENCH_SOLVER))
        with pytest.raises(IoError):
            save_model(model, str(tmp_path / "no" / "such" / "dir.json"))

    def test_spec_round_trip(self, tmp_path):
        spec = ExperimentSpec(
            problem="model3",
            p=40,
            n1=60,
            n2=80,
            n_test=30,
            replications=5,
            lambda_grid1=(2.0, 4.0),
            lambda_grid2=(1.0,),
            grid_divisor=4.0,
            cv_folds=3,
            seed=11,
            methods=("sdar", "oracle"),
        )
        path = tmp_path / "spec.json"
        save_spec(spec, str(path))
        assert load_spec(str(path)) == spec

    def test_wrong_kind_rejected(self, tmp_path):
        spec = ExperimentSpec(problem="model1", p=30)
        path = tmp_path / "spec.json"
        save_spec(spec, str(path))
        with pytest.raises(CorruptModelError):
            load_model(str(path))


class TestIngestCsv:
    def test_loads_features_and_names(self, tmp_path):
        path = tmp_path / "d.csv"
        feats = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]])
        write_csv(str(path), feats, [1, 1, 2, 2], names=["a", "b"])
        data = ingest_csv(str(path), "y")
        assert np.array_equal(data.features, feats)
        assert np.array_equal(data.labels, [1, 1, 2, 2])
        assert data.feature_names == ("a", "b")
        assert data.feature_indices is None

    def test_label_column_position_is_free(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("y,a,b\n1,0.5,1.5\n2,2.5,3.5\n")
        data = ingest_csv(str(path), "y")
        assert np.array_equal(data.features, [[0.5, 1.5], [2.5, 3.5]])
        assert data.feature_names == ("a", "b")

    def test_non_numeric_cell_coordinates(self, tmp_path):
        path = tmp_path / "d.csv"
        lines = ["a,b,c,y"]
        for i in range(1, 10):
            lines.append(f"{i}.0,{i}.5,{i}.25,1" if i != 7 else "7.0,7.5,oops,1")
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as err:
            ingest_csv(str(path), "y")
        assert err.value.row == 7
        assert err.value.col == 3

    def test_missing_label_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1.0,2.0\n")
        with pytest.raises(MissingLabelColumnError):
            ingest_csv(str(path), "y")

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,y\n1.0,2.0,1\n3.0,1\n")
        with pytest.raises(ParseError) as err:
            ingest_csv(str(path), "y")
        assert err.value.row == 2

    def test_non_integer_label_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,y\n1.0,1.5\n")
        with pytest.raises(ParseError):
            ingest_csv(str(path), "y")

    def test_empty_and_headerless_files(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("")
        with pytest.raises(ParseError):
            ingest_csv(str(path), "y")
        path.write_text("a,y\n")
        with pytest.raises(ParseError):
            ingest_csv(str(path), "y")

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(IoError):
            ingest_csv(str(tmp_path / "absent.csv"), "y")

    def test_screening_at_ingest(self, tmp_path):
        # middle feature has identical class means: zero separation
        path = tmp_path / "d.csv"
        rng = np.random.default_rng(8)
        n = 30
        f1 = np.r_[rng.normal(0, 1, n), rng.normal(3, 1, n)]
        f2 = np.r_[rng.normal(0, 1, n), rng.normal(0, 1, n)]
        f3 = np.r_[rng.normal(0, 1, n), rng.normal(-3, 1, n)]
        feats = np.column_stack([f1, f2, f3])
        labels = np.r_[np.ones(n, int), np.full(n, 2)]
        write_csv(str(path), feats, labels, names=["x1", "x2", "x3"])
        data = ingest_csv(str(path), "y", screen_top_k=2)
        assert data.feature_names == ("x1", "x3")
        assert data.feature_indices == (0, 2)
        assert data.p == 2


class TestScreening:
    def test_welch_matches_reference(self):
        data = toy_dataset(seed=21, n1=25, n2=35, p=5, shift=0.7)
        x1 = data.features[data.labels == 1]
        x2 = data.features[data.labels == 2]
        want = scipy.stats.ttest_ind(x2, x1, equal_var=False).statistic
        assert np.allclose(welch_t_statistics(data), want, rtol=1e-12)

    def test_degenerate_feature_conventions(self):
        feats = np.array(
            [[1.0, 2.0, 0.3], [1.0, 2.0, -0.1], [1.0, 5.0, 0.4], [1.0, 5.0, 1.3]]
        )
        labels = np.array([1, 1, 2, 2])
        t = welch_t_statistics(LabeledDataset(feats, labels))
        assert t[0] == 0.0  # constant, equal means
        assert t[1] == np.inf  # constant within class, separated means
        assert np.isfinite(t[2])

    def test_top_k_keeps_original_order(self):
        rng = np.random.default_rng(22)
        n = 40
        # separations 3, 0, 1 by column
        feats = np.column_stack(
            [
                np.r_[rng.normal(0, 1, n), rng.normal(3, 1, n)],
                np.r_[rng.normal(0, 1, n), rng.normal(0, 1, n)],
                np.r_[rng.normal(0, 1, n), rng.normal(1, 1, n)],
            ]
        )
        labels = np.r_[np.ones(n, int), np.full(n, 2)]
        out = screen_features(LabeledDataset(feats, labels), 2)
        assert out.feature_indices == (0, 2)
        assert np.array_equal(out.features, feats[:, [0, 2]])

    def test_top_k_at_least_p_keeps_all(self):
        data = toy_dataset(seed=23, p=4)
        out = screen_features(data, 9)
        assert out.p == 4
        assert out.feature_indices == (0, 1, 2, 3)

    def test_idempotent_and_composes_indices(self):
        data = toy_dataset(seed=24, p=8)
        once = screen_features(data, 5)
        again = screen_features(once, 5)
        assert again.feature_indices == once.feature_indices
        assert np.array_equal(again.features, once.features)
        deeper = screen_features(once, 2)
        assert set(deeper.feature_indices) <= set(once.feature_indices)
        assert deeper.feature_indices == tuple(sorted(deeper.feature_indices))

    def test_infinite_t_ranked_first(self):
        feats = np.array(
            [[0.0, 0.1], [0.0, 1.2], [0.0, -0.3], [1.0, 0.4], [1.0, 0.2], [1.0, 1.1]]
        )
        labels = np.array([1, 1, 1, 2, 2, 2])
        out = screen_features(LabeledDataset(feats, labels), 1)
        assert out.feature_indices == (0,)


class TestTuneLambdas:
    def spec_with_grids(self, grid1, grid2, folds=5):
        return ExperimentSpec(
            problem="model1",
            p=30,
            lambda_grid1=grid1,
            lambda_grid2=grid2,
            cv_folds=folds,
            seed=5,
        )

    def test_rejects_unknown_method(self):
        data = toy_dataset()
        with pytest.raises(ValidationError):
            tune_lambdas(data, self.spec_with_grids((1.0,), (1.0,)), "oracle")

    def test_singleton_grid_skips_cv(self):
        # three samples per class cannot be split into five folds, so a
        # successful return proves no fold work happened
        data = toy_dataset(n1=3, n2=3, p=4)
        spec = self.spec_with_grids((3.0,), (1.5,), folds=5)
        lam1, lam2 = tune_lambdas(data, spec, "sdar")
        scale = default_scale(4, 3, 3)
        assert lam1 == pytest.approx(1.5 * scale)
        assert lam2 == pytest.approx(0.75 * scale)

    def test_ties_go_to_larger_radii(self):
        # wide separation: every candidate classifies the folds perfectly
        data = toy_dataset(seed=31, n1=30, n2=30, p=4, shift=6.0)
        spec = self.spec_with_grids((1.0, 2.0), (1.0, 2.0), folds=3)
        lam1, lam2 = tune_lambdas(data, spec, "sdar", cv_seed=[5, 2])
        # divisor 2 maps the grid to (0.5, 1.0) x scale; ties pick the larger
        scale = default_scale(4, 30, 30)
        assert lam1 == pytest.approx(1.0 * scale)
        assert lam2 == pytest.approx(1.0 * scale)

    def test_failing_candidate_excluded(self, monkeypatch):
        import sdar.bench as bench_mod
        from sdar.solver import InfeasibleError

        data = toy_dataset(seed=32, n1=30, n2=30, p=4, shift=2.0)
        spec = self.spec_with_grids((0.5, 2.0), (2.0,), folds=3)
        scale = default_scale(4, 30, 30)
        real = bench_mod.solve_graph_program

        def flaky(sig1, sig2, cfg):
            if cfg.lambda1 < 0.5 * scale:
                raise InfeasibleError("forced failure for the small radius")
            return real(sig1, sig2, cfg)

        monkeypatch.setattr(bench_mod, "solve_graph_program", flaky)
        lam1, _ = tune_lambdas(data, spec, "sdar", cv_seed=[5, 2])
        assert lam1 == pytest.approx(1.0 * scale)

    def test_nonpositive_logdet_candidate_excluded(self, monkeypatch):
        import sdar.bench as bench_mod
        from sdar.classify import NonPositiveEigenvalueError

        data = toy_dataset(seed=33, n1=30, n2=30, p=4, shift=2.0)
        spec = self.spec_with_grids((0.5, 2.0), (2.0,), folds=3)
        scale = default_scale(4, 30, 30)
        real = bench_mod.sdar_from_solutions

        def picky(m1, m2, d_hat, beta_hat, lam1, lam2):
            if lam1 < 0.5 * scale:
                raise NonPositiveEigenvalueError("forced log-det failure")
            return real(m1, m2, d_hat, beta_hat, lam1, lam2)

        monkeypatch.setattr(bench_mod, "sdar_from_solutions", picky)
        lam1, _ = tune_lambdas(data, spec, "sdar", cv_seed=[5, 2])
        assert lam1 == pytest.approx(1.0 * scale)

    def test_all_candidates_invalid(self, monkeypatch):
        import sdar.bench as bench_mod
        from sdar.solver import InfeasibleError

        def hopeless(sig1, sig2, cfg):
            raise InfeasibleError("forced failure")

        monkeypatch.setattr(bench_mod, "solve_graph_program", hopeless)
        data = toy_dataset(seed=34, n1=30, n2=30, p=4)
        spec = self.spec_with_grids((1.0, 2.0), (1.0,), folds=3)
        with pytest.raises(AllCandidatesInvalidError):
            tune_lambdas(data, spec, "sdar", cv_seed=[5, 2])

    def test_deterministic_given_cv_seed(self):
        data = toy_dataset(seed=35, n1=40, n2=40, p=5, shift=1.0)
        spec = self.spec_with_grids((2.0, 4.0), (1.0, 2.0), folds=4)
        a = tune_lambdas(data, spec, "sdar", cv_seed=[9, 2])
        b = tune_lambdas(data, spec, "sdar", cv_seed=[9, 2])
        assert a == b


class TestPlugins:
    def test_qda_plugin_matches_direct_formula(self):
        data = toy_dataset(seed=41, n1=50, n2=70, p=4, shift=1.0)
        model = fit_qda_plugin(data)
        x1 = data.features[data.labels == 1]
        x2 = data.features[data.labels == 2]
        s1 = np.cov(x1, rowvar=False, bias=True) + 1e-6 * np.eye(4)
        s2 = np.cov(x2, rowvar=False, bias=True) + 1e-6 * np.eye(4)
        om1, om2 = np.linalg.inv(s1), np.linalg.inv(s2)
        assert np.allclose(model.d_hat, om2 - om1, atol=1e-8)
        assert np.allclose(
            model.beta_hat, om2 @ (x2.mean(axis=0) - x1.mean(axis=0)), atol=1e-8
        )
        want_ld = np.linalg.slogdet(s1)[1] - np.linalg.slogdet(s2)[1]
        assert model.logdet_term == pytest.approx(want_ld, abs=1e-9)
        assert model.log_prior_ratio == pytest.approx(2.0 * math.log(50 / 70))

    def test_qda_plugin_pseudo_inverse_branch(self):
        # p above the class sizes: clipped pseudo-inverse, no ridge
        data = toy_dataset(seed=42, n1=6, n2=6, p=10)
        model = fit_qda_plugin(data)
        x1 = data.features[data.labels == 1]
        s1 = np.cov(x1, rowvar=False, bias=True)
        w, v = np.linalg.eigh(s1)
        keep = w > 1e-6 * w[-1]
        om1 = (v[:, keep] / w[keep]) @ v[:, keep].T
        # the inverse acts as a true pseudo-inverse on the retained range
        assert np.allclose(om1 @ s1 @ om1, om1, atol=1e-8)
        assert np.all(np.isfinite(model.d_hat))
        assert np.all(np.isfinite(model.logdet_term))

    def test_lda_plugin_matches_direct_formula(self):
        data = toy_dataset(seed=43, n1=40, n2=60, p=4, shift=1.0)
        model = fit_lda_plugin(data)
        x1 = data.features[data.labels == 1]
        x2 = data.features[data.labels == 2]
        pooled = (
            40 * np.cov(x1, rowvar=False, bias=True)
            + 60 * np.cov(x2, rowvar=False, bias=True)
        ) / 100 + 1e-6 * np.eye(4)
        want = np.linalg.solve(pooled, x2.mean(axis=0) - x1.mean(axis=0))
        assert np.allclose(model.beta_hat, want, atol=1e-8)
        assert np.all(model.d_hat == 0.0)
        assert model.logdet_term == 0.0

    def test_lda_boundary_is_affine(self):
        data = toy_dataset(seed=44, n1=40, n2=40, p=3, shift=1.0)
        model = fit_lda_plugin(data)
        from sdar.classify import discriminant

        rng = np.random.default_rng(45)
        z = rng.standard_normal((50, 3))
        shift_dir = rng.standard_normal(3)
        # affine in z: discriminant differences are linear along any direction
        q0 = discriminant(z, model)
        q1 = discriminant(z + shift_dir, model)
        q2 = discriminant(z + 2 * shift_dir, model)
        assert np.allclose(q2 - q1, q1 - q0, atol=1e-8)


def small_spec(**kw):
    base = dict(
        problem="model3",
        p=30,
        n1=40,
        n2=40,
        n_test=50,
        replications=3,
        lambda_grid1=(10.0,),
        lambda_grid2=(2.0,),
        seed=17,
        methods=("oracle", "lda_plugin"),
    )
    base.update(kw)
    return ExperimentSpec(**base)


class TestRunExperiment:
    def test_deterministic_and_thread_invariant(self, monkeypatch):
        spec = small_spec()
        monkeypatch.setenv("SDAR_THREADS", "1")
        serial = run_experiment(spec)
        monkeypatch.setenv("SDAR_THREADS", "3")
        threaded = run_experiment(spec)
        assert serial == threaded
        for a, b in zip(serial.rows, threaded.rows):
            assert a.failed == b.failed
        assert emit_table(serial) == emit_table(threaded)

    def test_junk_thread_env_rejected(self, monkeypatch):
        monkeypatch.setenv("SDAR_THREADS", "many")
        with pytest.raises(ValidationError):
            run_experiment(small_spec(replications=1))
        monkeypatch.setenv("SDAR_THREADS", "-2")
        with pytest.raises(ValidationError):
            run_experiment(small_spec(replications=1))

    def test_oracle_rows_ignore_training_sizes(self):
        # the test stream is keyed off (seed, 1, rep) alone, so the oracle,
        # which never looks at training data, must score identically under
        # different training sizes
        t1 = run_experiment(small_spec(methods=("oracle",), n1=40, n2=40))
        t2 = run_experiment(small_spec(methods=("oracle",), n1=60, n2=45))
        assert t1.row("oracle").mean_error == t2.row("oracle").mean_error
        assert t1.row("oracle").std_error == t2.row("oracle").std_error

    def test_error_accounting_is_exact_counts(self):
        spec = small_spec(replications=4)
        table = run_experiment(spec)
        row = table.row("lda_plugin")
        # mean is total miscounts over total test points, so 4*50 cells
        assert (row.mean_error * 4 * 50) == pytest.approx(
            round(row.mean_error * 4 * 50), abs=1e-9
        )

    def test_failed_reps_counted_not_imputed(self, monkeypatch):
        import sdar.bench as bench_mod

        calls = {"n": 0}
        real = bench_mod.fit_lda_plugin

        def flaky(data):
            calls["n"] += 1
            if calls["n"] == 2:
                raise NumericalError("forced failure on the second replication")
            return real(data)

        monkeypatch.setattr(bench_mod, "fit_lda_plugin", flaky)
        monkeypatch.setenv("SDAR_THREADS", "1")
        table = run_experiment(small_spec(replications=3))
        row = table.row("lda_plugin")
        assert row.failed == 1
        assert row.replications == 2
        clean = table.row("oracle")
        assert clean.failed == 0 and clean.replications == 3

    def test_sdar_method_end_to_end(self):
        spec = small_spec(methods=("sdar", "oracle"), replications=2, n_test=40)
        table = run_experiment(spec)
        row = table.row("sdar")
        assert row.replications == 2
        assert 0.0 <= row.mean_error <= 1.0
        # regularized rule should not be wildly worse than random guessing
        assert row.mean_error <= 0.5

    def test_aggregate_unit(self):
        spec = small_spec(methods=("oracle",), replications=3)
        per_rep = [
            {"oracle": (5, 50, 0.1, None)},
            {"oracle": (None, 50, 0.1, NumericalError("x"))},
            {"oracle": (10, 50, 0.1, None)},
        ]
        table = _aggregate(spec, per_rep, 30)
        row = table.row("oracle")
        assert row.mean_error == pytest.approx(15 / 100)
        assert row.failed == 1
        assert row.replications == 2
        assert row.std_error == pytest.approx(np.std([0.1, 0.2], ddof=1))

    def test_aggregate_all_failed(self):
        spec = small_spec(methods=("oracle",), replications=2)
        per_rep = [
            {"oracle": (None, 50, 0.1, NumericalError("x"))},
            {"oracle": (None, 50, 0.1, NumericalError("x"))},
        ]
        row = _aggregate(spec, per_rep, 30).row("oracle")
        assert row.mean_error is None and row.std_error is None
        assert row.failed == 2 and row.replications == 0

    def test_csv_experiment_with_fold_screening(self, tmp_path):
        rng = np.random.default_rng(55)
        n = 60
        strong = np.r_[rng.normal(0, 1, n), rng.normal(2.5, 1, n)]
        noise1 = rng.standard_normal(2 * n)
        weak = np.r_[rng.normal(0, 1, n), rng.normal(0.3, 1, n)]
        noise2 = rng.standard_normal(2 * n)
        feats = np.column_stack([noise1, strong, noise2, weak])
        labels = np.r_[np.ones(n, int), np.full(n, 2)]
        path = tmp_path / "real.csv"
        write_csv(str(path), feats, labels)
        spec = ExperimentSpec(
            problem="csv",
            csv_path=str(path),
            label_column="y",
            replications=2,
            cv_folds=3,
            methods=("lda_plugin",),
            screen_top_k=2,
            seed=3,
            lambda_grid1=(6.0,),
            lambda_grid2=(2.0,),
        )
        a = run_experiment(spec)
        b = run_experiment(spec)
        assert a == b
        row = a.row("lda_plugin")
        assert row.p == 2  # screened width is what the table reports
        assert row.replications == 2
        assert row.mean_error <= 0.35  # the strong feature separates decently


class TestCli:
    def simulate_args(self, out=None):
        args = [
            "simulate", "--model", "3", "--p", "30", "--n1", "40", "--n2", "40",
            "--n-test", "40", "--reps", "2", "--seed", "9",
            "--methods", "oracle,lda_plugin",
        ]
        if out:
            args += ["--out", out]
        return args

    def test_simulate_writes_byte_identical_files(self, tmp_path):
        from sdar.cli import main

        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        assert main(self.simulate_args(str(out1))) == 0
        assert main(self.simulate_args(str(out2))) == 0
        assert out1.read_bytes() == out2.read_bytes()
        table = parse_table(out1.read_text())
        assert table.row("oracle").replications == 2

    def test_simulate_stdout_parses(self, capsys):
        from sdar.cli import main

        assert main(self.simulate_args()) == 0
        table = parse_table(capsys.readouterr().out)
        assert {r.method for r in table.rows} == {"oracle", "lda_plugin"}

    def test_validation_failure_exits_2(self, capsys):
        from sdar.cli import main

        args = self.simulate_args()
        args[args.index("--p") + 1] = "10"  # below the generator minimum
        assert main(args) == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_model_file_exits_4(self, tmp_path, capsys):
        from sdar.cli import main

        data = tmp_path / "d.csv"
        data.write_text("a,b\n0.0,0.0\n")
        code = main(
            ["predict", "--model", str(tmp_path / "nope.json"), "--data", str(data)]
        )
        assert code == 4

    def test_fit_predict_round_trip(self, tmp_path, capsys):
        from sdar.cli import main

        train = toy_dataset(seed=61, n1=30, n2=30, p=5, shift=2.0)
        train_csv = tmp_path / "train.csv"
        write_csv(str(train_csv), train.features, train.labels)
        model_path = tmp_path / "model.json"
        code = main(
            [
                "fit", "--data", str(train_csv), "--label-col", "y",
                "--lambda1", "0.5", "--lambda2", "0.5",
                "--model-out", str(model_path),
            ]
        )
        assert code == 0
        assert "lambda1=" in capsys.readouterr().out

        new_csv = tmp_path / "new.csv"
        pts = np.random.default_rng(62).standard_normal((8, 5))
        with open(new_csv, "w") as f:
            f.write("x1,x2,x3,x4,x5\n")
            for row in pts:
                f.write(",".join(repr(float(v)) for v in row) + "\n")
        labels_path = tmp_path / "labels.csv"
        code = main(
            ["predict", "--model", str(model_path), "--data", str(new_csv),
             "--out", str(labels_path)]
        )
        assert code == 0
        lines = labels_path.read_text().strip().splitlines()
        assert lines[0] == "label"
        assert len(lines) == 9
        assert set(lines[1:]) <= {"1", "2"}

        # loaded model classifies the same points identically in-process
        model = load_model(str(model_path))
        direct = classify_sdar(pts, model)
        assert [str(v) for v in direct] == lines[1:]

    def test_fit_requires_both_lambdas(self, tmp_path, capsys):
        from sdar.cli import main

        train = toy_dataset(seed=63, n1=20, n2=20, p=4)
        train_csv = tmp_path / "train.csv"
        write_csv(str(train_csv), train.features, train.labels)
        code = main(
            ["fit", "--data", str(train_csv), "--label-col", "y",
             "--lambda1", "0.5", "--model-out", str(tmp_path / "m.json")]
        )
        assert code == 2

    def test_tune_prints_pair(self, tmp_path, capsys):
        from sdar.cli import main

        train = toy_dataset(seed=64, n1=30, n2=30, p=4, shift=2.0)
        train_csv = tmp_path / "train.csv"
        write_csv(str(train_csv), train.features, train.labels)
        code = main(
            ["tune", "--data", str(train_csv), "--label-col", "y",
             "--grid-max-k", "2", "--folds", "3", "--seed", "1"]
        )
        assert code == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out[0] == "lambda1,lambda2"
        lam1, lam2 = (float(v) for v in out[1].split(","))
        assert lam1 > 0 and lam2 > 0

    def test_bench_subcommand_runs_spec_file(self, tmp_path):
        from sdar.cli import main

        spec = small_spec(replications=2)
        spec_path = tmp_path / "spec.json"
        save_spec(spec, str(spec_path))
        out = tmp_path / "table.md"
        code = main(
            ["bench", "--spec", str(spec_path), "--out", str(out),
             "--format", "markdown"]
        )
        assert code == 0
        table = parse_table(out.read_text())
        assert table.row("oracle").replications == 2
