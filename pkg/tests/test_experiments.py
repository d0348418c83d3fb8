import numpy as np
import pandas as pd
import pytest

from forestuq import (
    BenchConfig,
    Dataset,
    ExperimentConfig,
    ForestParams,
    fit_forest,
    oob_predict,
    run_bias_experiment,
    run_csv_benchmark,
    run_interval_experiment,
    write_report,
)
from forestuq.errordist import batch_error_estimates, build_leaf_index

TINY_FOREST = ForestParams(n_trees=60, seed=1)


def tiny_interval_config(**kw):
    base = dict(dataset="LinearPI", methods=("pi", "oob"), reps=3, n_train=120,
                n_test=80, alpha=0.1, params=TINY_FOREST, seed=5, grid_size=20)
    base.update(kw)
    return ExperimentConfig(**base)


def tiny_bias_config(**kw):
    base = dict(dataset="StepBias", methods=("rf", "bc"), reps=3, n_train=80,
                n_test=60, alpha=0.1, params=TINY_FOREST, seed=5, grid_size=20)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError, match="unknown dataset"):
        ExperimentConfig(dataset="Nope", methods=("pi",))
    with pytest.raises(ValueError, match="unknown methods"):
        ExperimentConfig(dataset="LinearPI", methods=("zzz",))
    with pytest.raises(ValueError, match="reps"):
        ExperimentConfig(dataset="LinearPI", methods=("pi",), reps=0)
    with pytest.raises(ValueError, match="alpha"):
        ExperimentConfig(dataset="LinearPI", methods=("pi",), alpha=1.5)


def test_bias_requires_bias_methods():
    with pytest.raises(ValueError, match="bias methods"):
        run_bias_experiment(tiny_bias_config(methods=("pi",)))


def test_interval_requires_interval_methods():
    with pytest.raises(ValueError, match="interval methods"):
        run_interval_experiment(tiny_interval_config(methods=("rf",)))


def test_interval_report_shape_and_bounds():
    rep = run_interval_experiment(tiny_interval_config())
    assert set(rep.per_rep.columns) == {"rep", "method", "coverage", "width"}
    assert len(rep.per_rep) == 3 * 2
    assert rep.per_rep["coverage"].between(0, 1).all()
    assert (rep.per_rep["width"] >= 0).all()
    # aggregates equal the mean of per-repetition rows
    for m in ("pi", "oob"):
        series = rep.per_rep.loc[rep.per_rep["method"] == m, "coverage"]
        got = rep.summary.loc[rep.summary["method"] == m, "coverage"].iloc[0]
        assert got == pytest.approx(series.mean(), abs=1e-15)
    # curves exist for the conditionally Gaussian laws
    assert rep.curves is not None
    assert set(rep.curves["method"]) == {"pi", "oob"}
    assert {"mean_lower", "mean_upper", "true_lower", "true_upper"} <= set(rep.curves.columns)


def test_bias_report_shape():
    rep = run_bias_experiment(tiny_bias_config())
    assert set(rep.per_rep.columns) == {"rep", "method", "mspe"}
    assert set(rep.summary.columns) == {"method", "msb", "mspe"}
    assert (rep.summary["msb"] >= 0).all()
    for m in ("rf", "bc"):
        series = rep.per_rep.loc[rep.per_rep["method"] == m, "mspe"]
        got = rep.summary.loc[rep.summary["method"] == m, "mspe"].iloc[0]
        assert got == pytest.approx(series.mean(), abs=1e-15)


def test_reports_reproducible_byte_for_byte(tmp_path):
    cfg = tiny_interval_config()
    a = run_interval_experiment(cfg)
    b = run_interval_experiment(cfg)
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    write_report(a, dir_a)
    write_report(b, dir_b)
    for name in ("report.csv", "summary.csv", "curves.csv"):
        assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()


def test_parallel_reps_match_serial(tmp_path):
    serial = run_interval_experiment(tiny_interval_config(n_jobs=1))
    parallel = run_interval_experiment(tiny_interval_config(n_jobs=2))
    dir_a, dir_b = tmp_path / "s", tmp_path / "p"
    write_report(serial, dir_a)
    write_report(parallel, dir_b)
    for name in ("report.csv", "summary.csv", "curves.csv"):
        assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()


def test_noiseless_linear_signal_collapses_intervals():
    # y = x1 exactly: with a deep forest, errors shrink and coverage ~ 1
    rng = np.random.default_rng(6)
    x = rng.uniform(-1, 1, (300, 2))
    data = Dataset(x=x, y=x[:, 0].copy())
    forest = fit_forest(data, ForestParams(n_trees=200, min_node_size=1, seed=2))
    oob = oob_predict(forest, data)
    index = build_leaf_index(forest, data)
    xt = rng.uniform(-1, 1, (200, 2))
    est = batch_error_estimates(forest, data, oob, xt, 0.05, index=index)
    yt = xt[:, 0]
    coverage = np.mean((yt >= est["lower"]) & (yt <= est["upper"]))
    assert coverage >= 0.9
    # widths collapse far below the response spread (ym spread ~ 2)
    assert np.mean(est["upper"] - est["lower"]) < 0.35 * yt.std()


def test_unweighted_oob_constant_width_on_clustered():
    cfg = ExperimentConfig(dataset="ClusteredPI", methods=("oob",), reps=1,
                           n_train=150, n_test=100, alpha=0.1,
                           params=TINY_FOREST, seed=3, grid_size=30)
    rep = run_interval_experiment(cfg)
    curves = rep.curves[rep.curves["method"] == "oob"]
    widths = curves["mean_upper"] - curves["mean_lower"]
    assert widths.max() - widths.min() < 1e-9


def test_csv_benchmark(tmp_path):
    rng = np.random.default_rng(9)
    x = rng.uniform(0, 1, (160, 3))
    data = Dataset(x=x, y=rng.normal(4 * x[:, 0], 1.0))
    cfg = BenchConfig(response_column="y", reps=3, params=TINY_FOREST, seed=2,
                      methods=("rf", "bc", "pi", "oob"))
    rep = run_csv_benchmark(data, cfg)
    assert rep.kind == "bench"
    mspe = rep.summary[rep.summary["metric"] == "mspe"]
    assert set(mspe["method"]) == {"rf", "bc"}
    cov = rep.summary[(rep.summary["metric"] == "coverage")]
    assert cov["value"].between(0, 1).all()
    paths = write_report(rep, tmp_path / "bench")
    assert len(paths) == 2
