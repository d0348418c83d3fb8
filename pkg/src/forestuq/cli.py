"""Command-line front end: fit/serialize forests, predict with uncertainty,
run canned simulation experiments, and benchmark external CSV datasets.

Output files are written atomically (temp file + rename); a failed run
leaves no partial outputs. Exit codes: 0 success, 1 runtime error,
2 argument error (argparse prints usage).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import pandas as pd

THREADS_ENV = "FOREST_ERROR_THREADS"
PREDICT_MODES = ("all", "interval", "quantile", "mspe", "bias", "bc")


def _threads(value: int | None) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


def _forest_params(args, p: int | None = None):
    from .forest import ForestParams

    return ForestParams(
        n_trees=args.trees,
        mtry=args.mtry,
        min_node_size=args.min_node_size,
        seed=args.seed,
    )


def _atomic_write(frame: pd.DataFrame, path: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    frame.to_csv(tmp, index=False)
    os.replace(tmp, path)


def _require_file(path: str) -> str:
    if not os.path.isfile(path):
        raise RuntimeError(f"input file not found: {path}")
    return path


def cmd_fit(args) -> int:
    from .data import load_csv
    from .forest import fit_forest
    from .serialize import save_forest

    _require_file(args.data)
    data = load_csv(args.data, args.response_column, args.categorical)
    forest = fit_forest(data, _forest_params(args), n_jobs=_threads(args.threads))
    tmp = f"{args.out}.tmp{os.getpid()}"
    save_forest(forest, tmp, data=data)
    os.replace(tmp, args.out)
    print(f"fitted {forest.n_trees} trees on n={data.n}, p={data.p} -> {args.out}")
    return 0


def _predict_frame(forest, data, xmat, alpha, mode) -> pd.DataFrame:
    from .errordist import batch_error_estimates, build_leaf_index
    from .forest import oob_predict

    oob = oob_predict(forest, data)
    index = build_leaf_index(forest, data)
    levels = (alpha,) if mode == "quantile" else ()
    # quantile mode still needs a valid interval level for the shared pass
    est = batch_error_estimates(forest, data, oob, xmat,
                                alpha if mode != "quantile" else 0.05,
                                index=index, quantile_levels=levels)
    cols = {
        "all": ["prediction", "bc_prediction", "mspe", "bias", "lower", "upper"],
        "interval": ["prediction", "lower", "upper"],
        "mspe": ["prediction", "mspe"],
        "bias": ["prediction", "bias"],
        "bc": ["prediction", "bc_prediction"],
    }
    if mode == "quantile":
        frame = pd.DataFrame({
            "prediction": est["prediction"],
            "quantile": est[f"q{alpha:g}"],
        })
    else:
        frame = pd.DataFrame({c: est[c] for c in cols[mode]})
    frame["fallback"] = est["fallback"].astype(int)
    return frame


def cmd_predict(args) -> int:
    from .serialize import load_forest

    _require_file(args.model)
    _require_file(args.data)
    forest, data = load_forest(args.model)
    if data is None:
        raise RuntimeError(
            f"{args.model} carries no training data; refit with `forestuq fit`"
        )
    frame = pd.read_csv(args.data)
    if data.feature_names:
        missing = [c for c in data.feature_names if c not in frame.columns]
        if missing:
            raise RuntimeError(f"input is missing model columns: {missing}")
        xmat = frame[list(data.feature_names)].to_numpy(dtype=np.float64)
    else:
        xmat = frame.to_numpy(dtype=np.float64)
    if xmat.shape[1] != forest.train_p:
        raise RuntimeError(
            f"expected {forest.train_p} covariate columns, got {xmat.shape[1]}"
        )
    if not np.isfinite(xmat).all():
        raise RuntimeError("prediction input contains missing or non-finite values")
    out = _predict_frame(forest, data, xmat, args.alpha, args.mode)
    _atomic_write(out, args.out)
    print(f"wrote {len(out)} rows -> {args.out}")
    return 0


def _config_params(cfg: dict, seed_override: int | None):
    from .forest import ForestParams

    fc = cfg.get("forest", {})
    return ForestParams(
        n_trees=fc.get("trees", 1000),
        mtry=fc.get("mtry"),
        min_node_size=fc.get("min_node_size", 5),
        seed=seed_override if seed_override is not None else cfg.get("seed", 0),
    )


def cmd_simulate(args) -> int:
    from . import datagen
    from .experiments import (ExperimentConfig, run_bias_experiment,
                              run_interval_experiment, write_report)

    _require_file(args.config)
    with open(args.config) as fh:
        cfg = json.load(fh)
    for key in ("experiment", "dataset", "methods"):
        if key not in cfg:
            raise RuntimeError(f"config is missing required key {key!r}")
    kind = cfg["experiment"]
    if kind not in ("bias", "interval"):
        raise RuntimeError(f"experiment must be 'bias' or 'interval', got {kind!r}")
    full = cfg.get("full", {}) if args.full else {}

    def pick(key, default):
        return full.get(key, cfg.get(key, default))

    config = ExperimentConfig(
        dataset=cfg["dataset"],
        methods=tuple(cfg["methods"]),
        reps=pick("reps", 50),
        n_train=pick("n_train", 200 if kind == "bias" else 1000),
        n_test=pick("n_test", 500),
        alpha=cfg.get("alpha", 0.05),
        params=_config_params(cfg, args.seed),
        seed=args.seed if args.seed is not None else cfg.get("seed", 0),
        grid_size=pick("grid_size", 500),
        n_jobs=_threads(args.threads),
    )
    runner = run_bias_experiment if kind == "bias" else run_interval_experiment
    report = runner(config)
    written = write_report(report, args.out_dir)
    print(report.summary.to_string(index=False))
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_bench(args) -> int:
    from .data import load_csv
    from .experiments import BenchConfig, run_csv_benchmark, write_report

    _require_file(args.data)
    _require_file(args.config)
    with open(args.config) as fh:
        cfg = json.load(fh)
    if "response_column" not in cfg:
        raise RuntimeError("bench config needs a 'response_column' key")
    data = load_csv(args.data, cfg["response_column"],
                    cfg.get("categorical_columns", ()))
    config = BenchConfig(
        response_column=cfg["response_column"],
        categorical_columns=tuple(cfg.get("categorical_columns", ())),
        train_fraction=cfg.get("train_fraction", 0.75),
        methods=tuple(cfg.get("methods", ("rf", "bc", "pi", "oob"))),
        reps=cfg.get("reps", 20),
        alpha=cfg.get("alpha", 0.05),
        params=_config_params(cfg, args.seed),
        seed=args.seed if args.seed is not None else cfg.get("seed", 0),
        n_jobs=_threads(args.threads),
    )
    report = run_csv_benchmark(data, config)
    written = write_report(report, args.out_dir)
    print(report.summary.to_string(index=False))
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forestuq",
        description="Random-forest prediction uncertainty: fit, predict, simulate, bench, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_forest_flags(p):
        p.add_argument("--trees", type=int, default=1000, metavar="B",
                       help="number of trees (default 1000)")
        p.add_argument("--mtry", type=int, default=None, metavar="M",
                       help="candidate features per split (default max(p/3, 1))")
        p.add_argument("--min-node-size", type=int, default=5, metavar="K",
                       help="minimum node size (default 5)")
        p.add_argument("--seed", type=int, default=0, metavar="U64",
                       help="master RNG seed (default 0)")

    def add_threads(p):
        p.add_argument("--threads", type=int, default=None, metavar="N",
                       help=f"parallel workers (default ${THREADS_ENV} or 1)")

    p = sub.add_parser("fit", help="fit a forest on a CSV and save the model file")
    p.add_argument("data", help="training CSV with a header row")
    p.add_argument("out", help="output model file")
    p.add_argument("--response-column", required=True, metavar="COL")
    p.add_argument("--categorical", action="append", default=[], metavar="COL",
                   help="categorical column to one-hot encode (repeatable)")
    add_forest_flags(p)
    add_threads(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="per-row uncertainty estimates from a model file")
    p.add_argument("model", help="model file from `forestuq fit`")
    p.add_argument("data", help="CSV of covariate rows to predict")
    p.add_argument("out", help="output CSV")
    p.add_argument("--alpha", type=float, default=0.05,
                   help="interval miss rate, or the level for --mode quantile")
    p.add_argument("--mode", choices=PREDICT_MODES, default="all")
    add_threads(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="run a canned synthetic experiment config")
    p.add_argument("config", help="experiment config JSON")
    p.add_argument("out_dir", help="directory for report.csv / summary.csv / curves.csv")
    p.add_argument("--full", action="store_true",
                   help="use the config's full-scale overrides (e.g. 1000 reps)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    add_threads(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="repeated train/test benchmark on a real CSV")
    p.add_argument("data", help="benchmark CSV with a header row")
    p.add_argument("config", help="bench config JSON (response_column, ratios, methods)")
    p.add_argument("out_dir", help="directory for report.csv / summary.csv")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    add_threads(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="start the HTTP model service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # noqa: BLE001 - single-line cause, exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
