import math
import warnings

import numpy as np
import pytest

from funnol.dataset import (DataFormatError, Dataset, FunctionalSample, SplitSpec, concat,
                            downsample, load_ucr, split, split_indices, standardize,
                            write_ucr)


def test_load_two_line_fixture(two_line_file):
    ds = load_ucr(two_line_file)
    assert (ds.J, ds.D, len(ds), ds.num_classes) == (2, 1, 2, 2)
    assert list(ds.labels) == [0, 1]
    np.testing.assert_array_equal(ds.grid, [0.0, 1.0])
    np.testing.assert_array_equal(ds.samples[1].values[:, 0], [1.0, 1.5])


def test_nan_and_empty_fields_become_masked_zero(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("3\t1.0\tNaN\t2.0\n3\t\t4.0\t5.0\n")
    ds = load_ucr(p)
    s0, s1 = ds.samples
    assert not s0.mask[1, 0] and s0.values[1, 0] == 0.0
    assert not s1.mask[0, 0] and s1.values[0, 0] == 0.0
    assert s0.mask.sum() == 2 and s1.mask.sum() == 2


def test_labels_remapped_in_sorted_order(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("5,1,2\n-1,3,4\n2,5,6\n5,7,8\n")
    ds = load_ucr(p)
    assert ds.label_names == (-1, 2, 5)
    assert list(ds.labels) == [2, 0, 1, 2]


def test_multichannel_files(tmp_path):
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    a.write_text("1\t1\t2\n2\t3\t4\n1\t5\t6\n")
    b.write_text("1\t-1\t-2\n2\t-3\t-4\n1\t-5\t-6\n")
    ds = load_ucr([a, b])
    assert ds.D == 2 and len(ds) == 3 and ds.J == 2
    np.testing.assert_array_equal(ds.samples[1].values, [[3, -3], [4, -4]])
    assert list(ds.labels) == [0, 1, 0]


def test_row_blocks_are_stacked(tmp_path):
    a, b = tmp_path / "tr.tsv", tmp_path / "te.tsv"
    a.write_text("1\t1\t2\n")
    b.write_text("2\t3\t4\n")
    ds = load_ucr([[a, b]])
    assert len(ds) == 2 and ds.num_classes == 2


def test_ragged_row_reports_line(tmp_path):
    p = tmp_path / "r.tsv"
    p.write_text("1\t1\t2\n1\t1\n")
    with pytest.raises(DataFormatError, match=":2:"):
        load_ucr(p)


def test_channel_label_mismatch(tmp_path):
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    a.write_text("1\t1\t2\n2\t3\t4\n")
    b.write_text("1\t1\t2\n1\t3\t4\n")
    with pytest.raises(DataFormatError, match="row 2"):
        load_ucr([a, b])


def test_grid_file_override(tmp_path, two_line_file):
    g = tmp_path / "grid.txt"
    g.write_text("0.5\n0.75\n")
    ds = load_ucr(two_line_file, grid=g)
    np.testing.assert_array_equal(ds.grid, [0.5, 0.75])


def test_write_back_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.normal(size=(5, 7, 2))
    ds = Dataset.from_arrays(values, [0, 1, 1, 0, 1], num_classes=2)
    files = write_ucr(ds, str(tmp_path / "x"))
    back = load_ucr(files)
    np.testing.assert_array_equal(back.values_array(), ds.values_array())
    # bit-identical file contents after a second write
    files2 = write_ucr(back, str(tmp_path / "y"))
    for f1, f2 in zip(files, files2):
        assert open(f1).read() == open(f2).read()
    meta = (tmp_path / "x.json").read_text()
    assert '"J": 7' in meta and '"D": 2' in meta


def test_sentinel_enforced():
    s = FunctionalSample(np.array([[1.0], [7.0]]), np.array([[True], [False]]))
    assert s.values[1, 0] == 0.0
    with pytest.raises(ValueError):
        s.values[0, 0] = 3.0


def test_invalid_dataset_shapes():
    s = FunctionalSample.full(np.zeros((3, 1)), 0)
    with pytest.raises(ValueError):
        Dataset(np.arange(4.0), [s], 1, 1)
    with pytest.raises(ValueError):
        Dataset(np.arange(3.0), [FunctionalSample.full(np.zeros((3, 1)), 2)], 2, 1)
    with pytest.raises(ValueError):
        Dataset(np.array([0.0, 0.0, 1.0]), [s], 1, 1)


def _balanced(n_per_class, q=2):
    labels = np.repeat(np.arange(q), n_per_class)
    values = np.arange(labels.size * 3, dtype=float).reshape(-1, 3)
    return Dataset.from_arrays(values, labels, num_classes=q)


def test_split_balanced_half():
    tr, te = split(_balanced(5), SplitSpec(0.5, seed=1))
    assert (len(tr), len(te)) == (5, 5)
    # shortfall from the per-class floors goes to one class only
    assert sorted(np.bincount(tr.labels)) == [2, 3]


@pytest.mark.parametrize("sizes,fraction,expected", [
    ((10, 10), 0.7, [7, 7]),
    ((5, 5), 0.5, [3, 2]),
    ((3, 40), 0.5, [1, 20]),
    ((2, 2), 0.1, [1, 1]),
    ((1, 6), 0.5, [1, 3]),
])
def test_train_counts(sizes, fraction, expected):
    from funnol.dataset import _train_counts
    assert _train_counts(list(sizes), fraction) == expected


def test_split_floor_rule_and_determinism():
    ds = _balanced(10)
    a = split_indices(ds, SplitSpec(0.7, 42))
    b = split_indices(ds, SplitSpec(0.7, 42))
    np.testing.assert_array_equal(a[0], b[0])
    tr_labels = ds.labels[a[0]]
    assert list(np.bincount(tr_labels)) == [7, 7]
    assert set(a[0]).isdisjoint(a[1])
    assert sorted(np.concatenate(a)) == list(range(20))
    c = split_indices(ds, SplitSpec(0.7, 43))
    assert not np.array_equal(a[0], c[0])


def test_split_singleton_class_warns():
    ds = Dataset.from_arrays(np.zeros((5, 2)), [0, 0, 0, 0, 1], num_classes=2)
    with pytest.warns(UserWarning, match="single sample"):
        tr, te = split_indices(ds, SplitSpec(0.5, 0))
    assert 4 in tr


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec(1.0)
    with pytest.raises(ValueError):
        split(Dataset.from_arrays(np.zeros((1, 2)), [0]), SplitSpec())


def test_downsample_identity_and_count():
    rng = np.random.default_rng(0)
    ds = Dataset.from_arrays(rng.normal(size=(4, 100, 2)), [0, 1, 0, 1])
    assert downsample(ds, 1.0, seed=3) is ds
    half = downsample(ds, 0.5, seed=3)
    for s, orig in zip(half.samples, ds.samples):
        assert list(s.mask.sum(axis=0)) == [50, 50]
        np.testing.assert_array_equal(s.values[s.mask], orig.values[s.mask])
        assert np.all(s.values[~s.mask] == 0.0)
        assert s.label == orig.label
    again = downsample(ds, 0.5, seed=3)
    np.testing.assert_array_equal(half.mask_array(), again.mask_array())


def test_downsample_degenerate():
    ds = Dataset.from_arrays(np.zeros((2, 10)), [0, 1])
    with pytest.raises(ValueError):
        downsample(ds, 0.1, 0)
    with pytest.raises(ValueError):
        downsample(ds, 0.0, 0)


def test_standardize_hand_arithmetic():
    train = Dataset.from_arrays(np.array([[1.0], [3.0]]), [0, 1])
    test = Dataset.from_arrays(np.array([[3.0]]), [0], num_classes=2)
    tr, te, st = standardize(train, test)
    assert st.mean[0] == 2.0
    assert st.sd[0] == pytest.approx(math.sqrt(2))
    assert te.samples[0].values[0, 0] == pytest.approx(1 / math.sqrt(2))


def test_standardize_constant_channel():
    train = Dataset.from_arrays(np.full((3, 4), 5.0), [0, 1, 0])
    tr, _, st = standardize(train, train)
    assert st.sd[0] == 1.0
    assert np.all(tr.values_array() == 0.0)


def test_standardize_uses_observed_only():
    rng = np.random.default_rng(5)
    v = rng.normal(3.0, 2.0, size=(6, 8, 2))
    m = rng.random(v.shape) > 0.3
    train = Dataset.from_arrays(np.where(m, v, np.nan), [0, 1] * 3)
    tr, _, st = standardize(train, train)
    vals, mask = tr.values_array(), tr.mask_array()
    for d in range(2):
        # recompute the mean after transforming
        assert abs(vals[:, :, d][mask[:, :, d]].mean()) < 1e-12
    assert np.all(vals[~mask] == 0.0)


def test_concat():
    a = Dataset.from_arrays(np.zeros((2, 3)), [0, 1])
    b = Dataset.from_arrays(np.ones((1, 3)), [1], num_classes=2)
    assert len(concat([a, b])) == 3
