"""Versioned single-file forest format.

Layout: an 8-byte magic, a little-endian uint64 header length, a canonical
JSON header (self-describing: row/column counts, tree count, params, per-tree
node counts, section flags), then the raw little-endian node arrays, the
in-bag count matrix, and optionally the training data. Identical forests
serialize to identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .data import Dataset
from .forest import Forest, ForestParams

__all__ = ["save_forest", "load_forest", "forest_bytes"]

MAGIC = b"FQFRST01"
FORMAT_VERSION = 1

_ARRAYS = (
    ("split_feature", "<i4"),
    ("split_threshold", "<f8"),
    ("left_child", "<i4"),
    ("right_child", "<i4"),
    ("node_value", "<f8"),
)


def forest_bytes(forest: Forest, data: Dataset | None = None) -> bytes:
    """Serialize a forest (and optionally its training data) to bytes."""
    node_counts = np.diff(forest.node_offsets).tolist()
    header = {
        "format": FORMAT_VERSION,
        "train_n": int(forest.train_n),
        "train_p": int(forest.train_p),
        "n_trees": int(forest.n_trees),
        "params": {
            "n_trees": forest.params.n_trees,
            "mtry": forest.params.mtry,
            "min_node_size": forest.params.min_node_size,
            "seed": int(forest.params.seed),
        },
        "node_counts": node_counts,
        "has_training_data": data is not None,
        "feature_names": list(data.feature_names) if data is not None and data.feature_names else None,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii")
    parts = [MAGIC, struct.pack("<Q", len(blob)), blob]
    for name, dtype in _ARRAYS:
        parts.append(np.ascontiguousarray(getattr(forest, name), dtype).tobytes())
    parts.append(np.ascontiguousarray(forest.inbag, "<i4").tobytes())
    if data is not None:
        parts.append(np.ascontiguousarray(data.x, "<f8").tobytes())
        parts.append(np.ascontiguousarray(data.y, "<f8").tobytes())
    return b"".join(parts)


def save_forest(forest: Forest, path, data: Dataset | None = None) -> None:
    """Write the forest file; include data so prediction-time uncertainty
    estimates can be computed from the file alone."""
    with open(path, "wb") as fh:
        fh.write(forest_bytes(forest, data))


def _take(buf: memoryview, offset: int, dtype, count: int):
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    return arr, offset + arr.nbytes


def load_forest(path) -> tuple[Forest, Dataset | None]:
    """Read a forest file; returns (forest, training data or None)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path} is not a forest file (bad magic)")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    header = json.loads(raw[16:16 + hlen].decode("ascii"))
    if header["format"] != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {header['format']}")

    n = header["train_n"]
    p = header["train_p"]
    n_trees = header["n_trees"]
    node_counts = np.asarray(header["node_counts"], np.int64)
    total = int(node_counts.sum())
    offsets = np.concatenate([[0], np.cumsum(node_counts)])

    buf = memoryview(raw)
    pos = 16 + hlen
    arrays = {}
    for name, dtype in _ARRAYS:
        arrays[name], pos = _take(buf, pos, dtype, total)
    inbag, pos = _take(buf, pos, "<i4", n_trees * n)

    hp = header["params"]
    params = ForestParams(n_trees=hp["n_trees"], mtry=hp["mtry"],
                          min_node_size=hp["min_node_size"], seed=hp["seed"])
    forest = Forest(
        params=params,
        train_n=n,
        train_p=p,
        node_offsets=offsets,
        split_feature=arrays["split_feature"].astype(np.int32),
        split_threshold=arrays["split_threshold"].astype(np.float64),
        left_child=arrays["left_child"].astype(np.int32),
        right_child=arrays["right_child"].astype(np.int32),
        node_value=arrays["node_value"].astype(np.float64),
        inbag=inbag.astype(np.int32).reshape(n_trees, n),
    )
    data = None
    if header["has_training_data"]:
        x, pos = _take(buf, pos, "<f8", n * p)
        y, pos = _take(buf, pos, "<f8", n)
        names = header.get("feature_names")
        data = Dataset(x=x.astype(np.float64).reshape(n, p), y=y.astype(np.float64),
                       feature_names=tuple(names) if names else None)
    return forest, data
