"""Simulation harness: the bias and interval benchmark protocols.

Both protocols repeat (draw train set, fit, evaluate on a fresh test set)
and additionally track predictions/interval bounds on a fixed covariate grid
drawn once per experiment, from which mean-squared-bias and conditional
quantile curves are computed. Every repetition derives its RNG streams from
(master seed, stream tag, rep index), so reports are reproducible
byte-for-byte regardless of how repetitions are scheduled.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import datagen
from .baselines import batch_qrf_intervals, fit_residual_forest, oob_error_quantiles
from .data import Dataset
from .errordist import batch_error_estimates, build_leaf_index
from .forest import Forest, ForestParams, fit_forest, oob_predict, predict_forest
from .stringent import batch_stringent_intervals, stringent_fit

__all__ = ["ExperimentConfig", "ExperimentReport", "run_bias_experiment",
           "run_interval_experiment", "run_csv_benchmark", "write_report"]

BIAS_METHODS = ("rf", "boost", "bc")
INTERVAL_METHODS = ("pi", "stringent", "qrf", "oob")


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a named dataset, a method set, and the protocol sizes."""

    dataset: str
    methods: tuple[str, ...]
    reps: int = 50
    n_train: int = 200
    n_test: int = 500
    alpha: float = 0.05
    params: ForestParams = field(default_factory=ForestParams)
    seed: int = 0
    grid_size: int = 500
    n_jobs: int = 1

    def __post_init__(self):
        if self.dataset not in datagen.generator_names():
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        known = set(BIAS_METHODS) | set(INTERVAL_METHODS)
        bad = [m for m in self.methods if m not in known]
        if bad:
            raise ValueError(f"unknown methods {bad}; known: {sorted(known)}")
        object.__setattr__(self, "methods", tuple(self.methods))


@dataclass(frozen=True)
class ExperimentReport:
    """Per-repetition rows, aggregate table, and (for intervals) curve data."""

    kind: str
    config: object
    per_rep: pd.DataFrame
    summary: pd.DataFrame
    curves: pd.DataFrame | None = None


def _stream(seed: int, tag: int, rep: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed), tag, rep])


def _stream_seed(seed: int, tag: int, rep: int) -> int:
    return int(np.random.SeedSequence((int(seed), tag, rep)).generate_state(1, np.uint64)[0])


def _draw(config: ExperimentConfig, n: int, tag: int, rep: int) -> Dataset:
    spec = datagen.DataGenSpec(config.dataset, n, seed=_stream_seed(config.seed, tag, rep))
    return datagen.generate(spec)


def _grid(config: ExperimentConfig) -> np.ndarray:
    return datagen.sample_covariates(config.dataset, config.grid_size,
                                     seed=_stream_seed(config.seed, 1, 0))


def _bias_rep(config: ExperimentConfig, grid: np.ndarray, rep: int):
    train = _draw(config, config.n_train, 2, rep)
    test = _draw(config, config.n_test, 3, rep)
    params = replace(config.params, seed=_stream_seed(config.seed, 4, rep))
    forest = fit_forest(train, params)
    oob = oob_predict(forest, train)
    index = build_leaf_index(forest, train)

    rows = []
    grid_preds = {}
    if "rf" in config.methods or "bc" in config.methods:
        est_test = batch_error_estimates(forest, train, oob, test.x, config.alpha, index=index)
        est_grid = batch_error_estimates(forest, train, oob, grid, config.alpha, index=index)
        if "rf" in config.methods:
            rows.append(("rf", float(np.mean((test.y - est_test["prediction"]) ** 2))))
            grid_preds["rf"] = est_grid["prediction"]
        if "bc" in config.methods:
            rows.append(("bc", float(np.mean((test.y - est_test["bc_prediction"]) ** 2))))
            grid_preds["bc"] = est_grid["bc_prediction"]
    if "boost" in config.methods:
        boost_params = replace(config.params, seed=_stream_seed(config.seed, 5, rep))
        residual_forest = fit_residual_forest(train, oob, boost_params)
        pred_test = predict_forest(forest, test.x) - predict_forest(residual_forest, test.x)
        rows.append(("boost", float(np.mean((test.y - pred_test) ** 2))))
        grid_preds["boost"] = (predict_forest(forest, grid)
                               - predict_forest(residual_forest, grid))
    return rows, grid_preds


def run_bias_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Bias protocol: per-rep test MSPE plus mean-squared-bias on a fixed grid.

    MSB averages each method's mean prediction error (over repetitions)
    squared across the fixed grid, against the law's true conditional mean;
    the dataset must therefore have a closed-form conditional mean.
    """
    methods = [m for m in config.methods if m in BIAS_METHODS]
    if not methods:
        raise ValueError(f"no bias methods requested; choose from {BIAS_METHODS}")
    if not datagen.has_known_mean(config.dataset):
        raise ValueError(f"{config.dataset} has no known conditional mean for MSB")
    grid = _grid(config)

    results = _run_reps(config, lambda rep: _bias_rep(config, grid, rep))

    per_rep = pd.DataFrame(
        [(rep, m, v) for rep, (rows, _) in enumerate(results) for m, v in rows],
        columns=["rep", "method", "mspe"],
    )
    truth = datagen.true_mean(config.dataset, grid)
    summary_rows = []
    for m in methods:
        mean_pred = np.mean([g[m] for _, g in results], axis=0)
        msb = float(np.mean((mean_pred - truth) ** 2))
        mspe = float(per_rep.loc[per_rep["method"] == m, "mspe"].mean())
        summary_rows.append((m, msb, mspe))
    summary = pd.DataFrame(summary_rows, columns=["method", "msb", "mspe"])
    return ExperimentReport(kind="bias", config=config, per_rep=per_rep, summary=summary)


def _interval_rep(config: ExperimentConfig, grid: np.ndarray, rep: int):
    train = _draw(config, config.n_train, 2, rep)
    test = _draw(config, config.n_test, 3, rep)
    params = replace(config.params, seed=_stream_seed(config.seed, 4, rep))

    bounds_test = {}
    bounds_grid = {}
    needs_main_forest = any(m in config.methods for m in ("pi", "qrf", "oob"))
    if needs_main_forest:
        forest = fit_forest(train, params)
        index = build_leaf_index(forest, train)
        oob = oob_predict(forest, train)
    if "pi" in config.methods:
        est = batch_error_estimates(forest, train, oob, test.x, config.alpha, index=index)
        est_g = batch_error_estimates(forest, train, oob, grid, config.alpha, index=index)
        bounds_test["pi"] = (est["lower"], est["upper"])
        bounds_grid["pi"] = (est_g["lower"], est_g["upper"])
    if "qrf" in config.methods:
        est = batch_qrf_intervals(forest, train, test.x, config.alpha, index=index)
        est_g = batch_qrf_intervals(forest, train, grid, config.alpha, index=index)
        bounds_test["qrf"] = (est["lower"], est["upper"])
        bounds_grid["qrf"] = (est_g["lower"], est_g["upper"])
    if "oob" in config.methods:
        q_lo, q_hi = oob_error_quantiles(train, oob, config.alpha)
        preds = predict_forest(forest, test.x)
        preds_g = predict_forest(forest, grid)
        bounds_test["oob"] = (preds + q_lo, preds + q_hi)
        bounds_grid["oob"] = (preds_g + q_lo, preds_g + q_hi)
    if "stringent" in config.methods:
        model = stringent_fit(train, params,
                              partition_seed=_stream_seed(config.seed, 6, rep))
        est = batch_stringent_intervals(model, test.x, config.alpha)
        est_g = batch_stringent_intervals(model, grid, config.alpha)
        bounds_test["stringent"] = (est["lower"], est["upper"])
        bounds_grid["stringent"] = (est_g["lower"], est_g["upper"])

    rows = []
    for m, (lo, hi) in bounds_test.items():
        covered = float(np.mean((test.y >= lo) & (test.y <= hi)))
        width = float(np.mean(hi - lo))
        rows.append((m, covered, width))
    return rows, bounds_grid


def run_interval_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Interval protocol: per-rep coverage and width on fresh test draws,
    plus mean interval bounds on the fixed grid for quantile curves."""
    methods = [m for m in config.methods if m in INTERVAL_METHODS]
    if not methods:
        raise ValueError(f"no interval methods requested; choose from {INTERVAL_METHODS}")
    grid = _grid(config)

    results = _run_reps(config, lambda rep: _interval_rep(config, grid, rep))

    per_rep = pd.DataFrame(
        [(rep, m, c, w) for rep, (rows, _) in enumerate(results) for m, c, w in rows],
        columns=["rep", "method", "coverage", "width"],
    )
    summary = (per_rep.groupby("method", sort=False)[["coverage", "width"]]
               .mean().reindex(methods).reset_index())

    curves = None
    if datagen.has_known_quantiles(config.dataset):
        true_lo = datagen.true_quantile(config.dataset, grid, config.alpha / 2)
        true_hi = datagen.true_quantile(config.dataset, grid, 1 - config.alpha / 2)
        frames = []
        for m in methods:
            mean_lo = np.mean([g[m][0] for _, g in results], axis=0)
            mean_hi = np.mean([g[m][1] for _, g in results], axis=0)
            frames.append(pd.DataFrame({
                "grid_index": np.arange(config.grid_size),
                "signal": grid[:, 0],
                "method": m,
                "mean_lower": mean_lo,
                "mean_upper": mean_hi,
                "true_lower": true_lo,
                "true_upper": true_hi,
            }))
        curves = pd.concat(frames, ignore_index=True)
    return ExperimentReport(kind="interval", config=config, per_rep=per_rep,
                            summary=summary, curves=curves)


def _run_reps(config: ExperimentConfig, one_rep):
    if config.n_jobs > 1 and config.reps > 1:
        return Parallel(n_jobs=config.n_jobs)(
            delayed(one_rep)(rep) for rep in range(config.reps)
        )
    return [one_rep(rep) for rep in range(config.reps)]


@dataclass(frozen=True)
class BenchConfig:
    """Benchmark protocol for an externally supplied CSV dataset."""

    response_column: str
    categorical_columns: tuple[str, ...] = ()
    train_fraction: float = 0.75
    methods: tuple[str, ...] = ("rf", "bc", "pi", "oob")
    reps: int = 20
    alpha: float = 0.05
    params: ForestParams = field(default_factory=ForestParams)
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "categorical_columns", tuple(self.categorical_columns))


def _bench_rep(data: Dataset, config: BenchConfig, rep: int):
    rng = _stream(config.seed, 2, rep)
    perm = rng.permutation(data.n)
    n_train = max(2, int(round(config.train_fraction * data.n)))
    n_train = min(n_train, data.n - 1)
    tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    train = Dataset(x=data.x[tr], y=data.y[tr])
    params = replace(config.params, seed=_stream_seed(config.seed, 4, rep))
    forest = fit_forest(train, params)
    oob = oob_predict(forest, train)
    index = build_leaf_index(forest, train)
    x_test, y_test = data.x[te], data.y[te]

    rows = []
    est = batch_error_estimates(forest, train, oob, x_test, config.alpha, index=index)
    if "rf" in config.methods:
        rows.append(("rf", "mspe", float(np.mean((y_test - est["prediction"]) ** 2))))
    if "bc" in config.methods:
        rows.append(("bc", "mspe", float(np.mean((y_test - est["bc_prediction"]) ** 2))))
    if "boost" in config.methods:
        boost_params = replace(config.params, seed=_stream_seed(config.seed, 5, rep))
        residual_forest = fit_residual_forest(train, oob, boost_params)
        preds = est["prediction"] - predict_forest(residual_forest, x_test)
        rows.append(("boost", "mspe", float(np.mean((y_test - preds) ** 2))))
    if "pi" in config.methods:
        cov = float(np.mean((y_test >= est["lower"]) & (y_test <= est["upper"])))
        rows.append(("pi", "coverage", cov))
        rows.append(("pi", "width", float(np.mean(est["upper"] - est["lower"]))))
    if "qrf" in config.methods:
        q = batch_qrf_intervals(forest, train, x_test, config.alpha, index=index)
        cov = float(np.mean((y_test >= q["lower"]) & (y_test <= q["upper"])))
        rows.append(("qrf", "coverage", cov))
        rows.append(("qrf", "width", float(np.mean(q["upper"] - q["lower"]))))
    if "oob" in config.methods:
        q_lo, q_hi = oob_error_quantiles(train, oob, config.alpha)
        preds = est["prediction"]
        cov = float(np.mean((y_test >= preds + q_lo) & (y_test <= preds + q_hi)))
        rows.append(("oob", "coverage", cov))
        rows.append(("oob", "width", float(q_hi - q_lo)))
    if "stringent" in config.methods:
        model = stringent_fit(train, params,
                              partition_seed=_stream_seed(config.seed, 6, rep))
        s = batch_stringent_intervals(model, x_test, config.alpha)
        cov = float(np.mean((y_test >= s["lower"]) & (y_test <= s["upper"])))
        rows.append(("stringent", "coverage", cov))
        rows.append(("stringent", "width", float(np.mean(s["upper"] - s["lower"]))))
    return rows


def run_csv_benchmark(data: Dataset, config: BenchConfig) -> ExperimentReport:
    """Repeated random train/test splits of a real dataset.

    Point methods report test MSPE; interval methods report coverage and
    width. MSB is unavailable (no known conditional mean), matching the
    benchmark-vs-synthetic distinction of the protocols above.
    """
    if config.n_jobs > 1 and config.reps > 1:
        results = Parallel(n_jobs=config.n_jobs)(
            delayed(_bench_rep)(data, config, rep) for rep in range(config.reps)
        )
    else:
        results = [_bench_rep(data, config, rep) for rep in range(config.reps)]
    per_rep = pd.DataFrame(
        [(rep, m, k, v) for rep, rows in enumerate(results) for m, k, v in rows],
        columns=["rep", "method", "metric", "value"],
    )
    summary = (per_rep.groupby(["method", "metric"], sort=False)["value"]
               .mean().reset_index())
    return ExperimentReport(kind="bench", config=config, per_rep=per_rep, summary=summary)


def _atomic_write_csv(frame: pd.DataFrame, path: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    frame.to_csv(tmp, index=False)
    os.replace(tmp, path)


def write_report(report: ExperimentReport, out_dir: str) -> list[str]:
    """Write report.csv / summary.csv (and curves.csv when available)."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, frame in (("report.csv", report.per_rep), ("summary.csv", report.summary),
                        ("curves.csv", report.curves)):
        if frame is None:
            continue
        path = os.path.join(out_dir, name)
        _atomic_write_csv(frame, path)
        written.append(path)
    return written
