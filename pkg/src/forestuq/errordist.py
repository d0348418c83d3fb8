"""Conditional prediction-error distributions and their plug-in estimators.

The central object is a per-query-point weighted empirical distribution of
out-of-bag prediction errors. Weights are cohabitation frequencies: the
share of (tree, training row) pairs in which the row is out of bag for the
tree and lands in the same leaf as the query point. Conditional MSPE, bias,
bias-corrected predictions, response quantiles, and prediction intervals all
read off that distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import _kernels
from .data import Dataset
from .forest import Forest, OobPredictions, oob_predict, predict_forest

__all__ = [
    "EstimationError",
    "CohabWeights",
    "ErrorDistribution",
    "PredictionInterval",
    "LeafIndex",
    "build_leaf_index",
    "cohab_weights",
    "error_distribution",
    "weighted_quantile",
    "mspe_at",
    "bias_at",
    "bias_corrected_predict",
    "prediction_interval",
    "response_quantile",
    "uncertainty_table",
]


class EstimationError(RuntimeError):
    """An estimator has no support to work with (e.g. no usable OOB errors)."""


@dataclass(frozen=True)
class CohabWeights:
    """Normalized cohabitation weights of the training rows for one query point.

    raw_counts[i] tallies the trees in which row i is an out-of-bag
    cohabitant of the query point; total is the tally over all rows. When
    total is zero the weights fall back to uniform over the rows that are out
    of bag somewhere, and fallback_used is set.
    """

    weights: np.ndarray
    raw_counts: np.ndarray
    total: int
    fallback_used: bool


@dataclass(frozen=True)
class ErrorDistribution:
    """A weighted empirical CDF of prediction errors.

    errors is strictly ascending (ties merged, weights summed); weights are
    positive and sum to one. The CDF is the right-continuous step function
    jumping by weights[k] at errors[k].
    """

    errors: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.errors, np.float64)
        w = np.asarray(self.weights, np.float64)
        if e.size == 0 or e.size != w.size:
            raise ValueError("errors and weights must be equal-length and non-empty")
        object.__setattr__(self, "errors", e)
        object.__setattr__(self, "weights", w)

    def cdf(self, e):
        """P(error <= e) under the distribution; vectorized in e."""
        cum = np.cumsum(self.weights)
        idx = np.searchsorted(self.errors, np.asarray(e, np.float64), side="right")
        out = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
        return float(out) if np.isscalar(e) else out

    def moment(self, k: int) -> float:
        return float(np.dot(self.weights, self.errors**k))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "error": self.errors,
            "weight": self.weights,
            "cum_weight": np.cumsum(self.weights),
        })

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


@dataclass(frozen=True)
class PredictionInterval:
    lower: float
    upper: float
    center: float
    alpha: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError("interval bounds out of order")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, y: float) -> bool:
        return self.lower <= y <= self.upper


@dataclass(eq=False)
class LeafIndex:
    """Precomputed leaf-membership index of a forest over its training data.

    Shared by all per-query operations so repeated queries cost the leaf
    occupancy of the query point instead of a full (trees x rows) scan. The
    oob_* arrays form a CSR map from global node id to the out-of-bag
    training rows in that node's leaf; the inbag_* arrays do the same for
    in-bag rows together with their bootstrap multiplicities.
    """

    train_leaves: np.ndarray
    valid: np.ndarray
    oob_indptr: np.ndarray
    oob_rows: np.ndarray
    inbag_indptr: np.ndarray
    inbag_rows: np.ndarray
    inbag_mults: np.ndarray
    inbag_leaf_totals: np.ndarray


def _leaf_csr(global_leaves: np.ndarray, rows: np.ndarray, total_nodes: int,
              weights: np.ndarray | None = None):
    """Group rows by global leaf id into CSR (indptr, rows[, weights])."""
    order = np.argsort(global_leaves, kind="stable")
    counts = np.bincount(global_leaves, minlength=total_nodes)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    sorted_rows = rows[order].astype(np.int64)
    if weights is None:
        return indptr, sorted_rows
    return indptr, sorted_rows, weights[order]


def build_leaf_index(forest: Forest, data: Dataset) -> LeafIndex:
    """Index every training row's leaf in every tree, split by bag status."""
    train_leaves = forest.apply(data.x)
    total_nodes = int(forest.node_offsets[-1])
    global_leaves = (forest.node_offsets[:-1, None] + train_leaves).ravel()
    row_ids = np.broadcast_to(np.arange(data.n), train_leaves.shape).ravel()
    mults = forest.inbag.ravel()

    oob = mults == 0
    oob_indptr, oob_rows = _leaf_csr(global_leaves[oob], row_ids[oob], total_nodes)
    ib = ~oob
    inbag_indptr, inbag_rows, inbag_mults = _leaf_csr(
        global_leaves[ib], row_ids[ib], total_nodes, mults[ib].astype(np.float64)
    )
    totals = np.zeros(total_nodes)
    np.add.at(totals, global_leaves[ib], mults[ib])
    return LeafIndex(
        train_leaves=train_leaves,
        valid=(forest.inbag == 0).any(axis=0),
        oob_indptr=oob_indptr,
        oob_rows=oob_rows,
        inbag_indptr=inbag_indptr,
        inbag_rows=inbag_rows,
        inbag_mults=inbag_mults,
        inbag_leaf_totals=totals,
    )


def _cohab_counts(forest: Forest, index: LeafIndex, xmat: np.ndarray) -> np.ndarray:
    leaves = forest.apply(xmat)
    return _kernels.tally_cohabitants(
        leaves, forest.node_offsets, index.oob_indptr, index.oob_rows, forest.train_n
    )


def _normalize_counts(counts: np.ndarray, valid: np.ndarray):
    """Rows of counts -> weights summing to 1; zero-total rows fall back to
    uniform over the valid rows."""
    totals = counts.sum(axis=1)
    fallback = totals == 0
    weights = np.zeros(counts.shape, np.float64)
    ok = ~fallback
    weights[ok] = counts[ok] / totals[ok, None]
    if fallback.any():
        if not valid.any():
            raise EstimationError("no training row is out of bag in any tree")
        weights[np.ix_(fallback, valid)] = 1.0 / valid.sum()
    return weights, totals, fallback


def cohab_weights(forest: Forest, data: Dataset, x: np.ndarray,
                  index: LeafIndex | None = None) -> CohabWeights:
    """Out-of-bag cohabitation weights of every training row for query point x.

    raw_counts[i] = number of trees where row i is out of bag and shares the
    terminal node of x; weights normalize the counts to sum to one. A query
    point with no out-of-bag cohabitant anywhere gets uniform weights over
    the rows that are out of bag in at least one tree (fallback_used=True).
    """
    x = np.asarray(x, np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a single covariate vector")
    if index is None:
        index = build_leaf_index(forest, data)
    counts = _cohab_counts(forest, index, x[None, :])
    weights, totals, fallback = _normalize_counts(counts, index.valid)
    return CohabWeights(
        weights=weights[0],
        raw_counts=counts[0],
        total=int(totals[0]),
        fallback_used=bool(fallback[0]),
    )


def _merge_ties(errors: np.ndarray, weights: np.ndarray):
    order = np.argsort(errors, kind="stable")
    e = errors[order]
    w = weights[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(e)) + 1])
    return e[starts], np.add.reduceat(w, starts)


def error_distribution(forest: Forest, data: Dataset, oob: OobPredictions,
                       x: np.ndarray, index: LeafIndex | None = None) -> ErrorDistribution:
    """The weighted empirical distribution of OOB errors conditional on x.

    Pairs each valid row's out-of-bag error (response minus OOB prediction)
    with its cohabitation weight, drops zero-weight rows, merges tied error
    values, and renormalizes.
    """
    cw = cohab_weights(forest, data, x, index=index)
    support = oob.valid & (cw.weights > 0)
    if not support.any():
        raise EstimationError("no valid out-of-bag error carries positive weight")
    errors = data.y[support] - oob.values[support]
    weights = cw.weights[support]
    e, w = _merge_ties(errors, weights)
    # renormalize only if excluded rows actually carried mass (they cannot
    # via cohab_weights, but the contract tolerates foreign weight sources)
    dropped = float(cw.weights[~support].sum())
    if dropped > 0.0:
        w = w / w.sum()
    return ErrorDistribution(errors=e, weights=w)


def weighted_quantile(dist: ErrorDistribution, alpha: float) -> float:
    """Smallest stored error whose cumulative weight reaches alpha.

    This is the left-continuous generalized inverse inf{e : F(e) >= alpha};
    no interpolation is performed.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    cum = np.cumsum(dist.weights)
    idx = int(np.searchsorted(cum, alpha, side="left"))
    return float(dist.errors[min(idx, dist.errors.size - 1)])


def mspe_at(dist: ErrorDistribution) -> float:
    """Conditional mean squared prediction error: the distribution's second moment."""
    return dist.moment(2)


def bias_at(dist: ErrorDistribution) -> float:
    """Conditional bias (prediction minus response): minus the first moment."""
    return -dist.moment(1)


def bias_corrected_predict(forest: Forest, data: Dataset, oob: OobPredictions,
                           x: np.ndarray, index: LeafIndex | None = None) -> float:
    """Forest prediction at x minus the estimated conditional bias."""
    dist = error_distribution(forest, data, oob, x, index=index)
    return predict_forest(forest, x) - bias_at(dist)


def prediction_interval(forest: Forest, data: Dataset, oob: OobPredictions,
                        x: np.ndarray, alpha: float,
                        index: LeafIndex | None = None) -> PredictionInterval:
    """Level-(1-alpha) interval: forest prediction plus the alpha/2 and
    1-alpha/2 quantiles of the conditional error distribution."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    dist = error_distribution(forest, data, oob, x, index=index)
    center = predict_forest(forest, x)
    return PredictionInterval(
        lower=center + weighted_quantile(dist, alpha / 2),
        upper=center + weighted_quantile(dist, 1 - alpha / 2),
        center=center,
        alpha=alpha,
    )


def response_quantile(forest: Forest, data: Dataset, oob: OobPredictions,
                      x: np.ndarray, alpha: float,
                      index: LeafIndex | None = None) -> float:
    """Plug-in conditional response quantile: prediction + error quantile."""
    dist = error_distribution(forest, data, oob, x, index=index)
    return predict_forest(forest, x) + weighted_quantile(dist, alpha)


def _first_reaching(cum: np.ndarray, level: float) -> np.ndarray:
    """Per row of cum, first column index whose value >= level (clamped to the
    last column when rounding keeps the total fractionally below the level)."""
    hit = cum >= level
    idx = hit.argmax(axis=1)
    idx[~hit.any(axis=1)] = cum.shape[1] - 1
    return idx


def batch_error_estimates(forest: Forest, data: Dataset, oob: OobPredictions,
                          xmat: np.ndarray, alpha: float,
                          index: LeafIndex | None = None,
                          quantile_levels=()) -> dict:
    """Vectorized per-query-point estimates for a matrix of query points.

    Returns a dict of arrays: prediction, bc_prediction, mspe, bias, lower,
    upper, fallback (and one entry per extra quantile level). Observationally
    identical to looping the single-point operations; the work is shared
    through the leaf index and one global sort of the OOB errors.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    xmat = np.ascontiguousarray(np.atleast_2d(np.asarray(xmat, np.float64)))
    if index is None:
        index = build_leaf_index(forest, data)
    if not index.valid.any():
        raise EstimationError("no training row is out of bag in any tree")

    counts = _cohab_counts(forest, index, xmat)
    weights, _, fallback = _normalize_counts(counts, index.valid)

    valid_cols = np.flatnonzero(index.valid)
    errors = data.y[valid_cols] - oob.values[valid_cols]
    order = np.argsort(errors, kind="stable")
    e_sorted = errors[order]
    w = weights[:, valid_cols[order]]
    # merge tied error values exactly as the single-point path does, so the
    # two paths make identical quantile threshold comparisons
    starts = np.concatenate([[0], np.flatnonzero(np.diff(e_sorted)) + 1])
    e_merged = e_sorted[starts]
    w_merged = np.add.reduceat(w, starts, axis=1)
    cum = np.cumsum(w_merged, axis=1)

    leaves = forest.apply(xmat)
    preds = forest.leaf_values_at(leaves).mean(axis=0)
    bias = -(w_merged @ e_merged)
    out = {
        "prediction": preds,
        "bc_prediction": preds - bias,
        "mspe": w_merged @ (e_merged**2),
        "bias": bias,
        "lower": preds + e_merged[_first_reaching(cum, alpha / 2)],
        "upper": preds + e_merged[_first_reaching(cum, 1 - alpha / 2)],
        "fallback": fallback,
    }
    for level in quantile_levels:
        if not 0.0 < level < 1.0:
            raise ValueError(f"quantile level must be in (0, 1), got {level}")
        out[f"q{level:g}"] = preds + e_merged[_first_reaching(cum, level)]
    return out


def uncertainty_table(forest: Forest, data: Dataset, xmat: np.ndarray,
                      alpha: float = 0.05, oob: OobPredictions | None = None,
                      index: LeafIndex | None = None) -> pd.DataFrame:
    """One wide row of uncertainty estimates per query point.

    Columns: prediction, bc_prediction, mspe, bias, lower, upper, fallback.
    """
    if oob is None:
        oob = oob_predict(forest, data)
    est = batch_error_estimates(forest, data, oob, xmat, alpha, index=index)
    return pd.DataFrame({
        "prediction": est["prediction"],
        "bc_prediction": est["bc_prediction"],
        "mspe": est["mspe"],
        "bias": est["bias"],
        "lower": est["lower"],
        "upper": est["upper"],
        "fallback": est["fallback"].astype(int),
    })
