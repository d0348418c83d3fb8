"""Bootstrap-aggregated CART regression forests with out-of-bag bookkeeping.

Trees are stored as flat node arrays (feature/threshold/children/value) plus
the bootstrap multiplicity of every training row, which is what the
downstream error-distribution machinery consumes. Fitting is deterministic
given the seed: tree b draws all of its randomness from a stream derived
from (seed, b), so the tree set is independent of fitting order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from . import _kernels
from .data import Dataset

__all__ = [
    "ForestParams",
    "Tree",
    "Forest",
    "OobPredictions",
    "fit_forest",
    "terminal_node_of",
    "predict_forest",
    "oob_predict",
    "tree_from_structure",
]


def default_mtry(p: int) -> int:
    return max(p // 3, 1)


@dataclass(frozen=True)
class ForestParams:
    """Forest hyperparameters. mtry=None resolves to max(floor(p/3), 1) at fit."""

    n_trees: int = 1000
    mtry: int | None = None
    min_node_size: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be positive")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    def resolved_mtry(self, p: int) -> int:
        mtry = default_mtry(p) if self.mtry is None else self.mtry
        if mtry > p:
            raise ValueError(f"mtry={mtry} exceeds the number of covariates p={p}")
        return mtry


@dataclass(frozen=True)
class Tree:
    """One fitted tree: flat node arrays plus bootstrap multiplicities.

    Internal nodes have split_feature >= 0 and child indices; leaves carry -1
    there and are identified by their node index. node_value[k] is the
    multiplicity-weighted mean response of node k's in-bag members.
    """

    split_feature: np.ndarray
    split_threshold: np.ndarray
    left_child: np.ndarray
    right_child: np.ndarray
    node_value: np.ndarray
    inbag_counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "split_feature", np.asarray(self.split_feature, np.int32))
        object.__setattr__(self, "split_threshold", np.asarray(self.split_threshold, np.float64))
        object.__setattr__(self, "left_child", np.asarray(self.left_child, np.int32))
        object.__setattr__(self, "right_child", np.asarray(self.right_child, np.int32))
        object.__setattr__(self, "node_value", np.asarray(self.node_value, np.float64))
        object.__setattr__(self, "inbag_counts", np.asarray(self.inbag_counts, np.int32))
        n_nodes = self.split_feature.size
        for name in ("split_threshold", "left_child", "right_child", "node_value"):
            if getattr(self, name).size != n_nodes:
                raise ValueError(f"{name} length does not match split_feature")
        internal = self.split_feature >= 0
        if ((self.left_child[internal] < 0) | (self.right_child[internal] < 0)).any():
            raise ValueError("internal nodes must have two children")

    @property
    def n_nodes(self) -> int:
        return self.split_feature.size

    @property
    def is_leaf(self) -> np.ndarray:
        return self.split_feature < 0

    def leaf_ids(self) -> np.ndarray:
        return np.flatnonzero(self.is_leaf)

    def apply(self, xmat: np.ndarray) -> np.ndarray:
        """Leaf node index for every row of xmat."""
        xmat = np.ascontiguousarray(np.atleast_2d(xmat), np.float64)
        offsets = np.array([0, self.n_nodes], np.int64)
        return _kernels.apply_forest(
            offsets, self.split_feature, self.split_threshold,
            self.left_child, self.right_child, xmat,
        )[0]


@dataclass(eq=False)
class Forest:
    """A fitted forest: per-tree node arrays packed back to back.

    `node_offsets[b]` is the start of tree b's nodes in the packed arrays and
    child indices are local to each tree. `inbag` is the (n_trees, n) matrix
    of bootstrap multiplicities.
    """

    params: ForestParams
    train_n: int
    train_p: int
    node_offsets: np.ndarray
    split_feature: np.ndarray
    split_threshold: np.ndarray
    left_child: np.ndarray
    right_child: np.ndarray
    node_value: np.ndarray
    inbag: np.ndarray

    @property
    def n_trees(self) -> int:
        return self.node_offsets.size - 1

    def tree(self, b: int) -> Tree:
        lo, hi = self.node_offsets[b], self.node_offsets[b + 1]
        return Tree(
            split_feature=self.split_feature[lo:hi],
            split_threshold=self.split_threshold[lo:hi],
            left_child=self.left_child[lo:hi],
            right_child=self.right_child[lo:hi],
            node_value=self.node_value[lo:hi],
            inbag_counts=self.inbag[b],
        )

    @property
    def trees(self) -> tuple[Tree, ...]:
        return tuple(self.tree(b) for b in range(self.n_trees))

    @classmethod
    def from_trees(cls, trees, params: ForestParams, train_n: int, train_p: int) -> "Forest":
        trees = list(trees)
        if not trees:
            raise ValueError("a forest needs at least one tree")
        counts = np.array([t.n_nodes for t in trees], np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        inbag = np.stack([t.inbag_counts for t in trees]).astype(np.int32)
        if inbag.shape[1] != train_n:
            raise ValueError("inbag_counts length does not match train_n")
        return cls(
            params=params,
            train_n=train_n,
            train_p=train_p,
            node_offsets=offsets,
            split_feature=np.concatenate([t.split_feature for t in trees]),
            split_threshold=np.concatenate([t.split_threshold for t in trees]),
            left_child=np.concatenate([t.left_child for t in trees]),
            right_child=np.concatenate([t.right_child for t in trees]),
            node_value=np.concatenate([t.node_value for t in trees]),
            inbag=inbag,
        )

    def apply(self, xmat: np.ndarray) -> np.ndarray:
        """Leaf node index (local per tree) for every (tree, row) pair."""
        xmat = np.ascontiguousarray(np.atleast_2d(xmat), np.float64)
        if xmat.shape[1] != self.train_p:
            raise ValueError(f"expected {self.train_p} covariates, got {xmat.shape[1]}")
        return _kernels.apply_forest(
            self.node_offsets, self.split_feature, self.split_threshold,
            self.left_child, self.right_child, xmat,
        )

    def leaf_values_at(self, leaves: np.ndarray) -> np.ndarray:
        """Per-tree leaf predictions given an apply() result."""
        return self.node_value[self.node_offsets[:-1, None] + leaves]


@dataclass(frozen=True)
class OobPredictions:
    """Out-of-bag predictions of the training rows.

    values[i] averages the leaf predictions of the trees for which row i was
    out of bag; rows that were in-bag everywhere are masked (valid=False,
    value NaN).
    """

    values: np.ndarray
    oob_tree_counts: np.ndarray
    valid: np.ndarray


def _tree_seed(seed: int, b: int) -> int:
    return int(np.random.SeedSequence((int(seed), b)).generate_state(1, np.uint32)[0])


def _grow_range(x, y, seed, bs, mtry, min_node_size):
    return [
        _kernels.grow_tree(x, y, _tree_seed(seed, b), mtry, min_node_size)
        for b in bs
    ]


def fit_forest(data: Dataset, params: ForestParams | None = None, n_jobs: int = 1) -> Forest:
    """Fit a regression forest of params.n_trees bootstrap CART trees.

    Deterministic given (data, params) regardless of n_jobs: each tree's
    bootstrap draw and per-node feature sampling come from a stream hashed
    from (params.seed, tree_index).
    """
    params = params or ForestParams()
    mtry = params.resolved_mtry(data.p)
    bs = range(params.n_trees)
    if n_jobs > 1 and params.n_trees > 1:
        chunks = np.array_split(np.arange(params.n_trees), min(4 * n_jobs, params.n_trees))
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_grow_range)(data.x, data.y, params.seed, chunk, mtry, params.min_node_size)
            for chunk in chunks
        )
        raw = [t for part in parts for t in part]
    else:
        raw = _grow_range(data.x, data.y, params.seed, bs, mtry, params.min_node_size)

    counts = np.array([r[0].size for r in raw], np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return Forest(
        params=params,
        train_n=data.n,
        train_p=data.p,
        node_offsets=offsets,
        split_feature=np.concatenate([r[0] for r in raw]),
        split_threshold=np.concatenate([r[1] for r in raw]),
        left_child=np.concatenate([r[2] for r in raw]),
        right_child=np.concatenate([r[3] for r in raw]),
        node_value=np.concatenate([r[4] for r in raw]),
        inbag=np.stack([r[5] for r in raw]),
    )


def terminal_node_of(tree: Tree, x: np.ndarray) -> int:
    """Index of the unique leaf whose region contains x (left iff <= threshold)."""
    x = np.ascontiguousarray(np.asarray(x, np.float64))
    if x.ndim != 1:
        raise ValueError("x must be a single covariate vector")
    return int(_kernels.route_one(
        tree.split_feature, tree.split_threshold, tree.left_child, tree.right_child, x,
    ))


def predict_forest(forest: Forest, x: np.ndarray):
    """Forest prediction: the mean over trees of each tree's leaf value at x.

    Leaf values are the bootstrap-multiplicity-weighted mean responses of the
    leaf members, so this equals the usual weighted-average form. Accepts a
    single vector (returns a float) or a matrix (returns a vector).
    """
    x = np.asarray(x, np.float64)
    single = x.ndim == 1
    leaves = forest.apply(x)
    preds = forest.leaf_values_at(leaves).mean(axis=0)
    return float(preds[0]) if single else preds


def oob_predict(forest: Forest, data: Dataset) -> OobPredictions:
    """Average each training row's predictions over the trees where it is out of bag.

    data must be the training dataset the forest was fit on. Rows that are
    in-bag in every tree come back masked, not as an error.
    """
    if data.n != forest.train_n or data.p != forest.train_p:
        raise ValueError("data does not match the forest's training shape")
    leaves = forest.apply(data.x)
    per_tree = forest.leaf_values_at(leaves)
    oob_mask = forest.inbag == 0
    counts = oob_mask.sum(axis=0)
    valid = counts > 0
    sums = np.where(oob_mask, per_tree, 0.0).sum(axis=0)
    values = np.full(data.n, np.nan)
    values[valid] = sums[valid] / counts[valid]
    return OobPredictions(values=values, oob_tree_counts=counts.astype(np.int64), valid=valid)


def tree_from_structure(split_feature, split_threshold, left_child, right_child,
                        inbag_counts, data: Dataset) -> Tree:
    """Build a Tree from explicit structure, computing node values from data.

    Routes the in-bag rows through the given splits and fills node_value with
    the multiplicity-weighted mean response at every node. Raises if some
    leaf ends up with no in-bag member.
    """
    split_feature = np.asarray(split_feature, np.int32)
    n_nodes = split_feature.size
    stub = Tree(
        split_feature=split_feature,
        split_threshold=np.asarray(split_threshold, np.float64),
        left_child=np.asarray(left_child, np.int32),
        right_child=np.asarray(right_child, np.int32),
        node_value=np.zeros(n_nodes),
        inbag_counts=np.asarray(inbag_counts, np.int32),
    )
    counts = stub.inbag_counts.astype(np.float64)
    if counts.size != data.n:
        raise ValueError("inbag_counts length does not match data")
    wsum = np.zeros(n_nodes)
    wysum = np.zeros(n_nodes)
    for i in np.flatnonzero(counts > 0):
        node = 0
        while stub.split_feature[node] >= 0:
            wsum[node] += counts[i]
            wysum[node] += counts[i] * data.y[i]
            if data.x[i, stub.split_feature[node]] <= stub.split_threshold[node]:
                node = stub.left_child[node]
            else:
                node = stub.right_child[node]
        wsum[node] += counts[i]
        wysum[node] += counts[i] * data.y[i]
    leaves = stub.is_leaf
    if (wsum[leaves] == 0).any():
        raise ValueError("every leaf needs at least one in-bag member")
    values = np.divide(wysum, wsum, out=np.zeros(n_nodes), where=wsum > 0)
    return replace(stub, node_value=values)
