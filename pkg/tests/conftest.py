import numpy as np
import pytest

from forestuq import Dataset, ForestParams, fit_forest, oob_predict
from forestuq.errordist import build_leaf_index


@pytest.fixture(scope="session")
def step_data():
    rng = np.random.default_rng(2024)
    x = rng.uniform(0, 1, (200, 10))
    y = rng.normal(10.0 * (x[:, 0] > 0.5), 1.0)
    return Dataset(x=x, y=y)


@pytest.fixture(scope="session")
def small_fit():
    """A modest fitted forest shared by the per-point estimator tests."""
    rng = np.random.default_rng(7)
    x = rng.uniform(0, 1, (90, 4))
    y = rng.normal(5.0 * x[:, 0], 1.0)
    data = Dataset(x=x, y=y)
    forest = fit_forest(data, ForestParams(n_trees=60, seed=11))
    oob = oob_predict(forest, data)
    index = build_leaf_index(forest, data)
    return forest, data, oob, index
