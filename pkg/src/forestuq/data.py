"""Training-data container and CSV ingestion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


@dataclass(frozen=True)
class Dataset:
    """A numeric covariate matrix paired with a real-valued response vector.

    Enforces at construction: at least two rows, at least one column, equal
    row counts, and no NaN/inf anywhere.
    """

    x: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.x, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64))
        if x.ndim != 2:
            raise ValueError(f"covariates must be a 2-D matrix, got ndim={x.ndim}")
        if y.ndim != 1:
            raise ValueError(f"response must be a 1-D vector, got ndim={y.ndim}")
        if x.shape[0] != y.shape[0]:
            raise ValueError(
                f"row mismatch: {x.shape[0]} covariate rows vs {y.shape[0]} responses"
            )
        if x.shape[0] < 2:
            raise ValueError("need at least 2 rows")
        if x.shape[1] < 1:
            raise ValueError("need at least 1 covariate column")
        if not np.isfinite(x).all():
            raise ValueError("covariates contain NaN or infinite values")
        if not np.isfinite(y).all():
            raise ValueError("response contains NaN or infinite values")
        if self.feature_names is not None:
            names = tuple(str(c) for c in self.feature_names)
            if len(names) != x.shape[1]:
                raise ValueError("feature_names length does not match column count")
            object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


def load_csv(path, response_column: str, categorical_columns=()) -> Dataset:
    """Read a headered CSV into a Dataset, one-hot encoding declared categoricals.

    Parameters
    ----------
    path : str or path-like
        CSV file with a header row.
    response_column : str
        Name of the numeric response column.
    categorical_columns : iterable of str
        Columns to expand into one indicator column per level. Every other
        covariate column must already be numeric.

    Raises
    ------
    ValueError
        On a missing response column, missing values, or a non-numeric
        column that was not declared categorical.
    """
    frame = pd.read_csv(path)
    if response_column not in frame.columns:
        raise ValueError(f"response column {response_column!r} not found in {path}")
    categorical = list(categorical_columns)
    for col in categorical:
        if col not in frame.columns:
            raise ValueError(f"categorical column {col!r} not found in {path}")
        if col == response_column:
            raise ValueError("response column cannot be categorical")
    if frame.isna().any().any():
        bad = [c for c in frame.columns if frame[c].isna().any()]
        raise ValueError(f"missing values in columns: {bad}")

    y = pd.to_numeric(frame[response_column], errors="coerce")
    if y.isna().any():
        raise ValueError(f"response column {response_column!r} is not numeric")
    covariates = frame.drop(columns=[response_column])

    for col in covariates.columns:
        if col in categorical:
            continue
        if not np.issubdtype(covariates[col].dtype, np.number):
            raise ValueError(
                f"column {col!r} is not numeric; declare it categorical to one-hot encode"
            )
    if categorical:
        covariates = pd.get_dummies(covariates, columns=categorical, dtype=np.float64)
    return Dataset(
        x=covariates.to_numpy(dtype=np.float64),
        y=y.to_numpy(dtype=np.float64),
        feature_names=tuple(covariates.columns),
    )
