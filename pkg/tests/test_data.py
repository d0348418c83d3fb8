import numpy as np
import pytest

from forestuq import Dataset, load_csv


def test_dataset_basic():
    d = Dataset(x=[[1.0, 2.0], [3.0, 4.0]], y=[1.0, 2.0])
    assert d.n == 2 and d.p == 2
    assert d.x.dtype == np.float64


@pytest.mark.parametrize(
    "x, y",
    [
        ([[1.0]], [1.0]),                      # n < 2
        ([[1.0], [2.0]], [1.0]),               # length mismatch
        ([[np.nan], [2.0]], [1.0, 2.0]),       # NaN covariate
        ([[1.0], [2.0]], [1.0, np.inf]),       # inf response
        ([1.0, 2.0], [1.0, 2.0]),              # 1-D covariates
    ],
)
def test_dataset_rejects(x, y):
    with pytest.raises(ValueError):
        Dataset(x=x, y=y)


def test_load_csv_numeric(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,t\n1,2,3\n4,5,6\n7,8,9\n")
    d = load_csv(path, "t")
    assert d.n == 3 and d.p == 2
    assert d.feature_names == ("a", "b")
    assert np.array_equal(d.y, [3, 6, 9])


def test_load_csv_categorical_levels(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,c,t\n1,red,3\n4,blue,6\n7,red,9\n2,green,1\n")
    d = load_csv(path, "t", categorical_columns=["c"])
    # 1 numeric + 3 indicator columns, one per level
    assert d.p == 4
    onehot = [n for n in d.feature_names if n.startswith("c_")]
    assert sorted(onehot) == ["c_blue", "c_green", "c_red"]
    assert np.array_equal(np.sort(np.unique(d.x[:, 1:])), [0.0, 1.0])


def test_load_csv_missing_response(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b\n1,2\n3,4\n")
    with pytest.raises(ValueError, match="t"):
        load_csv(path, "t")


def test_load_csv_rejects_missing_values(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,t\n1,2\n,4\n")
    with pytest.raises(ValueError, match="missing"):
        load_csv(path, "t")


def test_load_csv_rejects_undeclared_text_column(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,c,t\n1,red,3\n4,blue,6\n")
    with pytest.raises(ValueError, match="categorical"):
        load_csv(path, "t")
