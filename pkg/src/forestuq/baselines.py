"""Comparison methods: response-quantile forests, unweighted OOB intervals,
and the boosting-style bias correction."""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import _kernels
from .data import Dataset
from .errordist import (
    ErrorDistribution,
    LeafIndex,
    PredictionInterval,
    _first_reaching,
    _merge_ties,
    build_leaf_index,
    weighted_quantile,
)
from .forest import Forest, ForestParams, OobPredictions, fit_forest, predict_forest

__all__ = ["BaselineKind", "qrf_interval", "unweighted_oob_interval",
           "fit_residual_forest", "boost_bias_correct"]


class BaselineKind(str, Enum):
    QRF = "qrf"
    UNWEIGHTED_OOB = "oob"
    BOOST_BC = "boost"


def _response_weights(forest: Forest, index: LeafIndex, xmat: np.ndarray) -> np.ndarray:
    """In-bag forest weights of the training rows, averaged over trees."""
    leaves = forest.apply(xmat)
    return _kernels.tally_inbag_weights(
        leaves, forest.node_offsets, index.inbag_indptr, index.inbag_rows,
        index.inbag_mults, index.inbag_leaf_totals, forest.train_n,
    )


def qrf_interval(forest: Forest, data: Dataset, x: np.ndarray, alpha: float,
                 index: LeafIndex | None = None) -> PredictionInterval:
    """Interval from the weighted distribution of training responses.

    The weights are the forest's own in-bag leaf shares averaged over trees,
    applied directly to the responses (not to prediction errors), so the
    endpoints are always existing training response values.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    x = np.asarray(x, np.float64)
    if index is None:
        index = build_leaf_index(forest, data)
    w = _response_weights(forest, index, x[None, :])[0]
    support = w > 0
    vals, ws = _merge_ties(data.y[support], w[support])
    dist = ErrorDistribution(errors=vals, weights=ws)
    return PredictionInterval(
        lower=weighted_quantile(dist, alpha / 2),
        upper=weighted_quantile(dist, 1 - alpha / 2),
        center=predict_forest(forest, x),
        alpha=alpha,
    )


def batch_qrf_intervals(forest: Forest, data: Dataset, xmat: np.ndarray,
                        alpha: float, index: LeafIndex | None = None) -> dict:
    """Vectorized qrf_interval over a matrix of query points."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    xmat = np.ascontiguousarray(np.atleast_2d(np.asarray(xmat, np.float64)))
    if index is None:
        index = build_leaf_index(forest, data)
    w = _response_weights(forest, index, xmat)
    order = np.argsort(data.y, kind="stable")
    y_sorted = data.y[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(y_sorted)) + 1])
    y_merged = y_sorted[starts]
    cum = np.cumsum(np.add.reduceat(w[:, order], starts, axis=1), axis=1)
    return {
        "prediction": predict_forest(forest, xmat),
        "lower": y_merged[_first_reaching(cum, alpha / 2)],
        "upper": y_merged[_first_reaching(cum, 1 - alpha / 2)],
    }


def oob_error_quantiles(data: Dataset, oob: OobPredictions, alpha: float):
    """Equal-weight quantiles of all valid OOB errors (shared by every x)."""
    errors = data.y[oob.valid] - oob.values[oob.valid]
    if errors.size == 0:
        raise ValueError("no valid out-of-bag errors")
    e, w = _merge_ties(errors, np.full(errors.size, 1.0 / errors.size))
    dist = ErrorDistribution(errors=e, weights=w)
    return weighted_quantile(dist, alpha / 2), weighted_quantile(dist, 1 - alpha / 2)


def unweighted_oob_interval(forest: Forest, data: Dataset, oob: OobPredictions,
                            x: np.ndarray, alpha: float) -> PredictionInterval:
    """Forest prediction plus the unweighted OOB-error quantiles.

    The error quantiles ignore x entirely, so the width is the same for
    every query point by construction.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    q_lo, q_hi = oob_error_quantiles(data, oob, alpha)
    center = predict_forest(forest, x)
    return PredictionInterval(lower=center + q_lo, upper=center + q_hi,
                              center=center, alpha=alpha)


def fit_residual_forest(data: Dataset, oob: OobPredictions,
                        params: ForestParams, n_jobs: int = 1) -> Forest:
    """Forest fit on the out-of-bag residuals (prediction minus response).

    Rows without a valid OOB prediction are dropped from the residual
    training set.
    """
    valid = oob.valid
    residuals = oob.values[valid] - data.y[valid]
    return fit_forest(Dataset(x=data.x[valid], y=residuals), params, n_jobs=n_jobs)


def boost_bias_correct(forest: Forest, data: Dataset, oob: OobPredictions,
                       params: ForestParams | None = None, x: np.ndarray = None,
                       residual_forest: Forest | None = None):
    """Boosting-style correction: subtract a second forest's residual fit.

    The second forest models the OOB residuals directly; pass
    residual_forest to reuse one across many query points. Accepts a single
    vector or a matrix of query points.
    """
    if residual_forest is None:
        residual_forest = fit_residual_forest(data, oob, params or forest.params)
    return predict_forest(forest, x) - predict_forest(residual_forest, x)
