"""Prediction-error distributions, bias corrections, and prediction intervals
for regression random forests, with a simulation benchmark harness."""

from .baselines import (
    BaselineKind,
    boost_bias_correct,
    fit_residual_forest,
    qrf_interval,
    unweighted_oob_interval,
)
from .data import Dataset, load_csv
from .datagen import DataGenSpec, generate
from .errordist import (
    CohabWeights,
    ErrorDistribution,
    EstimationError,
    LeafIndex,
    PredictionInterval,
    bias_at,
    bias_corrected_predict,
    build_leaf_index,
    cohab_weights,
    error_distribution,
    mspe_at,
    prediction_interval,
    response_quantile,
    uncertainty_table,
    weighted_quantile,
)
from .experiments import (
    BenchConfig,
    ExperimentConfig,
    ExperimentReport,
    run_bias_experiment,
    run_csv_benchmark,
    run_interval_experiment,
    write_report,
)
from .forest import (
    Forest,
    ForestParams,
    OobPredictions,
    Tree,
    fit_forest,
    oob_predict,
    predict_forest,
    terminal_node_of,
    tree_from_structure,
)
from .serialize import load_forest, save_forest
from .stringent import (
    StringentModel,
    stringent_error_distribution,
    stringent_fit,
    stringent_interval,
    stringent_weights,
)

__version__ = "0.1.0"
