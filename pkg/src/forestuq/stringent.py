"""Sample-split ("stringent") variant of the error-distribution estimator.

The training data are partitioned into three disjoint, size-balanced subsets.
One forest, fit on the first subset, produces out-of-sample prediction errors
on the third; a second forest, fit on the second subset, produces the
cohabitation weights of the third subset's rows. The error distribution and
its plug-ins are then assembled exactly as in `errordist`, with the third
subset as the support.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .data import Dataset
from .errordist import (
    CohabWeights,
    ErrorDistribution,
    PredictionInterval,
    _first_reaching,
    _leaf_csr,
    _merge_ties,
    _normalize_counts,
    weighted_quantile,
)
from .forest import Forest, ForestParams, fit_forest, predict_forest

__all__ = ["StringentModel", "stringent_fit", "stringent_weights",
           "stringent_error_distribution", "stringent_interval"]


@dataclass(eq=False)
class StringentModel:
    """Two disjoint-sample forests plus the held-out error material.

    forest_one (fit on subset I) provides predictions and the errors of the
    K rows; forest_two (fit on subset J) provides the weights over K.
    """

    forest_one: Forest
    forest_two: Forest
    k_errors: np.ndarray
    k_covariates: np.ndarray
    partition_seed: int
    i_idx: np.ndarray
    j_idx: np.ndarray
    k_idx: np.ndarray
    _k_leaf_indptr: np.ndarray | None = None
    _k_leaf_rows: np.ndarray | None = None

    @property
    def k_size(self) -> int:
        return self.k_errors.size

    def _k_index(self):
        if self._k_leaf_indptr is None:
            leaves = self.forest_two.apply(self.k_covariates)
            global_leaves = (self.forest_two.node_offsets[:-1, None] + leaves).ravel()
            rows = np.broadcast_to(np.arange(self.k_size), leaves.shape).ravel()
            indptr, sorted_rows = _leaf_csr(
                global_leaves, rows, int(self.forest_two.node_offsets[-1])
            )
            self._k_leaf_indptr = indptr
            self._k_leaf_rows = sorted_rows
        return self._k_leaf_indptr, self._k_leaf_rows


def partition_three_ways(n: int, seed: int):
    """Random disjoint split of range(n) into three parts with sizes differing
    by at most one; leftovers go to the first part, then the second."""
    perm = np.random.default_rng(int(seed)).permutation(n)
    base, rem = divmod(n, 3)
    n_i = base + (1 if rem >= 1 else 0)
    n_j = base + (1 if rem >= 2 else 0)
    i_idx = np.sort(perm[:n_i])
    j_idx = np.sort(perm[n_i:n_i + n_j])
    k_idx = np.sort(perm[n_i + n_j:])
    return i_idx, j_idx, k_idx


def _derived(params: ForestParams, tag: int) -> ForestParams:
    sub = int(np.random.SeedSequence((int(params.seed), tag)).generate_state(1, np.uint64)[0])
    return replace(params, seed=sub)


def stringent_fit(data: Dataset, params: ForestParams | None = None,
                  partition_seed: int = 0, n_jobs: int = 1) -> StringentModel:
    """Fit the sample-split estimator on a random three-way partition.

    Requires n >= 30 so each subset can support a forest. forest_two is fit
    on the second subset only; the third subset never enters a bootstrap
    sample, so its cohabitation counts need no out-of-bag condition.
    """
    params = params or ForestParams()
    if data.n < 30:
        raise ValueError(f"need at least 30 rows to partition, got {data.n}")
    i_idx, j_idx, k_idx = partition_three_ways(data.n, partition_seed)
    data_i = Dataset(x=data.x[i_idx], y=data.y[i_idx])
    data_j = Dataset(x=data.x[j_idx], y=data.y[j_idx])
    forest_one = fit_forest(data_i, _derived(params, 1), n_jobs=n_jobs)
    forest_two = fit_forest(data_j, _derived(params, 2), n_jobs=n_jobs)
    x_k = data.x[k_idx]
    k_errors = data.y[k_idx] - predict_forest(forest_one, x_k)
    return StringentModel(
        forest_one=forest_one,
        forest_two=forest_two,
        k_errors=k_errors,
        k_covariates=np.ascontiguousarray(x_k),
        partition_seed=int(partition_seed),
        i_idx=i_idx,
        j_idx=j_idx,
        k_idx=k_idx,
    )


def _stringent_counts(model: StringentModel, xmat: np.ndarray) -> np.ndarray:
    indptr, rows = model._k_index()
    leaves = model.forest_two.apply(xmat)
    return _kernels.tally_cohabitants(
        leaves, model.forest_two.node_offsets, indptr, rows, model.k_size
    )


def stringent_weights(model: StringentModel, x: np.ndarray) -> CohabWeights:
    """Cohabitation weights of the K rows for x under the second forest.

    raw_counts[i] = number of forest_two trees whose leaf containing x also
    contains K-row i (no bag condition: K never enters forest_two's
    bootstrap). If no K row cohabits x in any tree, weights fall back to
    uniform over K, flagged.
    """
    x = np.asarray(x, np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a single covariate vector")
    counts = _stringent_counts(model, x[None, :])
    all_valid = np.ones(model.k_size, bool)
    weights, totals, fallback = _normalize_counts(counts, all_valid)
    return CohabWeights(
        weights=weights[0],
        raw_counts=counts[0],
        total=int(totals[0]),
        fallback_used=bool(fallback[0]),
    )


def stringent_error_distribution(model: StringentModel, x: np.ndarray) -> ErrorDistribution:
    """K-error distribution at x, weighted by forest_two cohabitation."""
    cw = stringent_weights(model, x)
    support = cw.weights > 0
    errors = model.k_errors[support]
    e, w = _merge_ties(errors, cw.weights[support])
    return ErrorDistribution(errors=e, weights=w)


def stringent_interval(model: StringentModel, x: np.ndarray, alpha: float) -> PredictionInterval:
    """Prediction interval centered on forest_one's prediction at x."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    dist = stringent_error_distribution(model, x)
    center = predict_forest(model.forest_one, x)
    return PredictionInterval(
        lower=center + weighted_quantile(dist, alpha / 2),
        upper=center + weighted_quantile(dist, 1 - alpha / 2),
        center=center,
        alpha=alpha,
    )


def batch_stringent_intervals(model: StringentModel, xmat: np.ndarray, alpha: float) -> dict:
    """Vectorized stringent intervals for a matrix of query points."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    xmat = np.ascontiguousarray(np.atleast_2d(np.asarray(xmat, np.float64)))
    counts = _stringent_counts(model, xmat)
    weights, _, fallback = _normalize_counts(counts, np.ones(model.k_size, bool))

    order = np.argsort(model.k_errors, kind="stable")
    e_sorted = model.k_errors[order]
    w = weights[:, order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(e_sorted)) + 1])
    e_merged = e_sorted[starts]
    cum = np.cumsum(np.add.reduceat(w, starts, axis=1), axis=1)
    preds = predict_forest(model.forest_one, xmat)
    return {
        "prediction": preds,
        "lower": preds + e_merged[_first_reaching(cum, alpha / 2)],
        "upper": preds + e_merged[_first_reaching(cum, 1 - alpha / 2)],
        "fallback": fallback,
    }
