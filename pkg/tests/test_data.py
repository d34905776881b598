import io

import numpy as np
import pytest

from usmo.data import (
    Dataset,
    binarize_labels,
    dump_libsvm,
    f_measure,
    load_csv,
    load_libsvm,
    make_pu_split,
)
from usmo.exceptions import InputError, ParseError


def test_libsvm_basic():
    X, y = load_libsvm(io.StringIO("+1 1:1.0 3:2.0\n"))
    np.testing.assert_array_equal(X, [[1.0, 0.0, 2.0]])
    np.testing.assert_array_equal(y, [1.0])


def test_libsvm_empty_features_zero_vector():
    X, y = load_libsvm(io.StringIO("+1 2:5\n-1\n"))
    np.testing.assert_array_equal(X[1], [0.0, 0.0])
    assert y[1] == -1.0


def test_libsvm_descending_indices():
    with pytest.raises(ParseError) as err:
        load_libsvm(io.StringIO("+1 1:1\n+1 3:1 2:1\n"))
    assert err.value.line == 2
    assert "line 2" in str(err.value)


@pytest.mark.parametrize("line", ["abc 1:1", "+1 x:1", "+1 1:y", "+1 0:1", "+1 1-1", "+1 1:nan"])
def test_libsvm_malformed(line):
    with pytest.raises(ParseError):
        load_libsvm(io.StringIO(line + "\n"))


def test_libsvm_comments_and_blank_lines():
    X, y = load_libsvm(io.StringIO("# header\n\n1 1:2 # trailing\n"))
    assert X.shape == (1, 1) and y[0] == 1.0


def test_libsvm_dimension_limit():
    with pytest.raises(InputError):
        load_libsvm(io.StringIO("1 4:1\n"), n_features=3)
    X, _ = load_libsvm(io.StringIO("1 1:1\n"), n_features=3)
    assert X.shape == (1, 3)


def test_libsvm_round_trip(rng):
    X = rng.normal(size=(8, 5))
    X[X < 0.2] = 0.0
    y = np.where(rng.random(8) < 0.5, 1, -1)
    buf = io.StringIO()
    dump_libsvm(X, y, buf)
    X2, y2 = load_libsvm(io.StringIO(buf.getvalue()), n_features=5)
    np.testing.assert_array_equal(X, X2)
    np.testing.assert_array_equal(y, y2)


def test_libsvm_from_path(tmp_path):
    path = tmp_path / "d.svm"
    path.write_text("-1 2:0.5\n")
    X, y = load_libsvm(path)
    np.testing.assert_array_equal(X, [[0.0, 0.5]])


def test_csv_basic():
    X, y = load_csv(io.StringIO("1,0.5,0.25\n"), label_column=0)
    np.testing.assert_array_equal(X, [[0.5, 0.25]])
    np.testing.assert_array_equal(y, [1.0])


def test_csv_header_and_last_column_label():
    X, y = load_csv(io.StringIO("a,b,label\n0.5,2,-1\n"), label_column=-1, header=True)
    np.testing.assert_array_equal(X, [[0.5, 2.0]])
    np.testing.assert_array_equal(y, [-1.0])


def test_csv_bad_cell_reports_row_and_column():
    with pytest.raises(ParseError) as err:
        load_csv(io.StringIO("1,2,3\n1,oops,3\n"))
    assert (err.value.line, err.value.column) == (2, 2)


def test_csv_ragged():
    with pytest.raises(ParseError):
        load_csv(io.StringIO("1,2,3\n1,2\n"))


def test_binarize():
    np.testing.assert_array_equal(binarize_labels([1, -1, 1]), [1, -1, 1])
    np.testing.assert_array_equal(binarize_labels([0, 3, 1], target_class=3), [-1, 1, -1])
    with pytest.raises(InputError):
        binarize_labels([0, 1])


def _blobs(n_pos, n_neg):
    X = np.arange(n_pos + n_neg, dtype=float)[:, None]
    y = np.r_[np.ones(n_pos), -np.ones(n_neg)]
    return X, y


def test_split_sizes():
    X, y = _blobs(100, 100)
    split = make_pu_split(X, y, 0.2, seed=3)
    assert split.dataset.p == 20 and split.dataset.n == 180
    assert split.prior == 0.5
    assert split.hidden_labels.sum() == 80 - 100


def test_split_partition_and_purity():
    X, y = _blobs(37, 21)
    split = make_pu_split(X, y, 0.3, seed=1)
    ds = split.dataset
    assert ds.p == 12  # ceil(0.3 * 37)
    assert ds.p + ds.n == 58
    assert np.all(ds.positives[:, 0] < 37)
    rebuilt = np.sort(np.r_[ds.positives[:, 0], ds.unlabeled[:, 0]])
    np.testing.assert_array_equal(rebuilt, X[:, 0])
    # hidden labels line up with the pool
    np.testing.assert_array_equal(split.hidden_labels, np.where(ds.unlabeled[:, 0] < 37, 1, -1))


def test_split_fraction_one():
    X, y = _blobs(10, 5)
    split = make_pu_split(X, y, 1.0, seed=0)
    assert split.dataset.p == 10
    assert np.all(split.hidden_labels == -1)


def test_split_deterministic():
    X, y = _blobs(50, 50)
    a = make_pu_split(X, y, 0.2, seed=9)
    b = make_pu_split(X, y, 0.2, seed=9)
    np.testing.assert_array_equal(a.dataset.positives, b.dataset.positives)
    c = make_pu_split(X, y, 0.2, seed=10)
    assert not np.array_equal(a.dataset.positives, c.dataset.positives)


def test_split_errors():
    X, y = _blobs(0, 5)
    with pytest.raises(InputError):
        make_pu_split(X, y, 0.5, seed=0)
    X, y = _blobs(5, 0)
    with pytest.raises(InputError):
        make_pu_split(X, y, 1.0, seed=0)
    X, y = _blobs(5, 5)
    for frac in (0.0, 1.5):
        with pytest.raises(InputError):
            make_pu_split(X, y, frac, seed=0)


def test_f_measure_examples():
    assert f_measure([1, -1, 1], [1, -1, 1]) == 1.0
    assert f_measure([-1, -1], [1, -1]) == 0.0
    assert f_measure([1, 1, -1], [1, -1, 1]) == 0.5
    assert f_measure([-1, -1], [-1, -1]) == 0.0
    with pytest.raises(InputError):
        f_measure([1], [1, 1])


def test_dataset_validation():
    with pytest.raises(InputError):
        Dataset(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(InputError):
        Dataset(np.zeros((1, 2)), np.zeros((3, 3)))
    ds = Dataset([[1.0, 2.0]], [[3.0, 4.0], [5.0, 6.0]])
    assert (ds.p, ds.n, ds.dim) == (1, 2, 2)
    np.testing.assert_array_equal(ds.X[:, 0], [1, 3, 5])
