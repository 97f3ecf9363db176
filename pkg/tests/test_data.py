import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsched.data import (
    DatasetSpec,
    accuracy,
    build_problem,
    coerce_labels,
    from_spec,
    generate_synthetic,
    load_dataset,
    partition_data,
    standardize_features,
    train_test_split,
)
from fedsched.params import NetworkParams
from fedsched.training import train_algorithm2


def test_synthetic_is_deterministic():
    a = generate_synthetic(100, 4, seed=7)
    b = generate_synthetic(100, 4, seed=7)
    c = generate_synthetic(100, 4, seed=8)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.X, c.X)
    assert a.X.shape == (4, 100)
    assert set(np.unique(a.y)) <= {-1.0, 1.0}


def test_synthetic_rejects_bad_sizes():
    with pytest.raises(ValueError):
        generate_synthetic(5, 2, K=10)
    with pytest.raises(ValueError):
        generate_synthetic(10, 0)
    with pytest.raises(ValueError):
        generate_synthetic(10, 2, label_noise=1.5)


def test_separation_controls_difficulty():
    far = generate_synthetic(2000, 3, separation=10.0, seed=1)
    w = np.array([1.0, 0.0, 0.0])
    assert accuracy(w, far.X, far.y) == 1.0
    none = generate_synthetic(20_000, 3, separation=0.0, seed=1)
    assert accuracy(w, none.X, none.y) == pytest.approx(0.5, abs=0.03)


def test_label_noise_flips_fraction():
    clean = generate_synthetic(20_000, 2, separation=10.0, seed=2)
    noisy = generate_synthetic(20_000, 2, separation=10.0, label_noise=0.2, seed=2)
    w = np.array([1.0, 0.0])
    assert accuracy(w, clean.X, clean.y) == 1.0
    assert accuracy(w, noisy.X, noisy.y) == pytest.approx(0.8, abs=0.01)


def test_load_dense_with_header(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("label,x1,x2\n1,0.5,2\n-1,1.5,4\n1,2.5,6\n")
    ds = load_dataset(f, standardize=False)
    assert ds.X.shape == (2, 3)
    assert ds.y.tolist() == [1.0, -1.0, 1.0]
    assert ds.X[1].tolist() == [2.0, 4.0, 6.0]


def test_load_dense_whitespace_and_label_mapping(tmp_path):
    f = tmp_path / "d.txt"
    f.write_text("0 1 2\n# comment\n1 3 4\n")
    ds = load_dataset(f)
    assert ds.y.tolist() == [-1.0, 1.0]
    assert np.allclose(ds.X.mean(axis=1), 0) and np.allclose(ds.X.std(axis=1), 1)


def test_load_sparse(tmp_path):
    f = tmp_path / "s.svm"
    f.write_text("1 2:0.5 7:1.0\n-1 1:3\n")
    ds = load_dataset(f, "sparse", standardize=False)
    assert ds.X.shape == (7, 2)
    assert ds.X[1, 0] == 0.5 and ds.X[6, 0] == 1.0 and ds.X[0, 1] == 3.0
    assert ds.X.sum() == 4.5


@pytest.mark.parametrize("text,fmt,msg", [
    ("1,2\n1,abc\n", "dense", ":2: non-numeric"),
    ("1,2,3\n-1,2\n", "dense", ":2: expected 3 columns"),
    ("1\n", "dense", ":1: need a label"),
    ("1 2:x\n", "sparse", ":1: malformed"),
    ("1 0:1\n", "sparse", ":1: malformed"),
    ("\n\n", "dense", "empty dataset"),
])
def test_loader_errors_name_the_line(tmp_path, text, fmt, msg):
    f = tmp_path / "bad.txt"
    f.write_text(text)
    with pytest.raises(ValueError, match=msg):
        load_dataset(f, fmt)


def test_unknown_format(tmp_path):
    f = tmp_path / "x"
    f.write_text("1 2\n")
    with pytest.raises(ValueError, match="unknown dataset format"):
        load_dataset(f, "arff")


def test_coerce_labels():
    assert coerce_labels(np.array([3.0, 7.0, 3.0])).tolist() == [-1.0, 1.0, -1.0]
    assert coerce_labels(np.array([2.0, 2.0])).tolist() == [1.0, 1.0]
    with pytest.raises(ValueError, match="two classes"):
        coerce_labels(np.array([0.0, 1.0, 2.0]))


def test_standardize_constant_row():
    X = np.array([[1.0, 1.0, 1.0], [0.0, 1.0, 2.0]])
    Z = standardize_features(X)
    assert np.all(Z[0] == 0)
    assert Z[1].std() == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 200), data=st.data(), rule=st.sampled_from(["balanced_iid", "label_sorted_noniid"]))
def test_partition_is_disjoint_cover(n, data, rule):
    K = data.draw(st.integers(1, n))
    y = np.where(np.arange(n) % 3 == 0, 1.0, -1.0)
    parts = partition_data(y, K, rule, seed=1)
    assert len(parts) == K
    allidx = np.concatenate(parts)
    assert np.array_equal(np.sort(allidx), np.arange(n))
    sizes = [p.size for p in parts]
    assert max(sizes) - min(sizes) <= 1


def test_partition_singletons_and_label_sorted():
    y = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
    assert sorted(p.tolist() for p in partition_data(y, 6)) == [[i] for i in range(6)]
    lo, hi = partition_data(y, 2, "label_sorted_noniid")
    assert np.all(y[lo] == -1) and np.all(y[hi] == 1)


@settings(max_examples=30, deadline=None)
@given(sizes=st.lists(st.integers(1, 20), min_size=1, max_size=8))
def test_unbalanced_partition_sizes(sizes):
    n = sum(sizes)
    parts = partition_data(np.ones(n), len(sizes), "unbalanced", sizes=sizes)
    assert [p.size for p in parts] == sizes
    assert np.array_equal(np.sort(np.concatenate(parts)), np.arange(n))


def test_partition_errors():
    with pytest.raises(ValueError, match="sum to n"):
        partition_data(np.ones(10), 2, "unbalanced", sizes=[3, 3])
    with pytest.raises(ValueError):
        partition_data(np.ones(10), 2, "unbalanced")
    with pytest.raises(ValueError):
        partition_data(np.ones(3), 4)
    with pytest.raises(ValueError, match="unknown partition"):
        partition_data(np.ones(3), 1, "zipf")


def test_train_test_split_and_spec():
    ds = generate_synthetic(100, 2, seed=0)
    tr, te = train_test_split(ds, 0.2, seed=0)
    assert tr.n == 80 and te.n == 20
    assert train_test_split(ds, 0.0)[1] is None
    tr2, te2 = from_spec(DatasetSpec(n=50, d=3, test_fraction=0.1), K=5)
    assert tr2.n == 45 and te2.n == 5
    with pytest.raises(ValueError):
        from_spec(DatasetSpec(source="file"), K=2)
    with pytest.raises(ValueError):
        from_spec(DatasetSpec(source="web"), K=2)


def test_separable_data_is_learned_exactly():
    ds = generate_synthetic(200, 3, separation=10.0, seed=3)
    prob = build_problem(ds, 10, "logistic", xi=1e-3)
    res = train_algorithm2(prob, NetworkParams(ues_per_cell=10, subchannels=10), "NS", "ideal",
                           rounds=200, H=5, master_seed=0)
    assert res.records[-1].gap < 1e-3
    assert accuracy(res.w, ds.X, ds.y) == 1.0
