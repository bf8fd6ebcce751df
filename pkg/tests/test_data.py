import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from tabdl.data import (
    CategoryEncoder,
    DataError,
    DatasetSchema,
    TabularDataset,
    accuracy,
    load_csv,
    rmse,
    split_dataset,
)
from tabdl.preprocessing import (
    PreprocessingError,
    QuantileNormalizer,
    Standardizer,
    TargetScaler,
    apply_quantile,
    fit_quantile,
    preprocess,
    standardize,
)


@pytest.fixture
def schema():
    return DatasetSchema({"a": "numerical", "c": "categorical", "y": "target"}, task="regression")


@pytest.fixture
def small_csv(tmp_path):
    path = tmp_path / "small.csv"
    path.write_text("a,c,y\n1.5,b,0.1\n2.5,a,0.2\n-1,b,0.3\n", encoding="utf-8")
    return path


class TestLoadCsv:
    def test_shapes(self, small_csv, schema):
        table = load_csv(small_csv, schema)
        assert table.x_num.shape == (3, 1)
        assert table.x_cat.shape == (3, 1)
        assert table.y.shape == (3,)

    def test_first_appearance_encoding(self, small_csv, schema):
        table = load_csv(small_csv, schema)
        np.testing.assert_array_equal(table.x_cat[:, 0], [0, 1, 0])
        assert table.cardinalities == [2]

    def test_missing_file(self, tmp_path, schema):
        with pytest.raises(FileNotFoundError):
            load_csv(tmp_path / "nope.csv", schema)

    def test_unparsable_cell_names_row_and_column(self, tmp_path, schema):
        path = tmp_path / "bad.csv"
        path.write_text("a,c,y\n1,b,0\nxx,a,1\n")
        with pytest.raises(DataError, match=r"row 3.*'a'"):
            load_csv(path, schema)

    def test_header_mismatch(self, tmp_path, schema):
        path = tmp_path / "bad.csv"
        path.write_text("a,y,c\n1,0,b\n")
        with pytest.raises(DataError):
            load_csv(path, schema)

    def test_classification_labels(self, tmp_path):
        path = tmp_path / "cls.csv"
        path.write_text("x,label\n0.1,yes\n0.2,no\n0.3,yes\n")
        table = load_csv(path, DatasetSchema({"x": "numerical", "label": "target"}, task="binclass"))
        np.testing.assert_array_equal(table.y, [1, 0, 1])


def test_schema_needs_one_target():
    with pytest.raises(DataError):
        DatasetSchema({"a": "numerical"}, task="regression")
    with pytest.raises(DataError):
        DatasetSchema({"a": "numerical", "y": "target"}, task="multiclass", n_classes=1)


class TestUnknownCategories:
    def _table(self, tmp_path, allow):
        path = tmp_path / "u.csv"
        path.write_text("c,y\n" + "\n".join(f"{c},{i}" for i, c in enumerate("aabbz")) + "\n")
        schema = DatasetSchema({"c": "categorical", "y": "target"}, task="regression",
                               allow_unknown_categories=allow)
        return load_csv(path, schema)

    def test_unknown_is_error_by_default(self, tmp_path):
        table = self._table(tmp_path, allow=False)
        with pytest.raises(DataError, match="unknown category"):
            TabularDataset.from_table(table, ([0, 1, 2], [3], [4]))

    def test_reserved_index_when_opted_in(self, tmp_path):
        table = self._table(tmp_path, allow=True)
        ds = TabularDataset.from_table(table, ([0, 1, 2], [3], [4]))
        assert ds.cardinalities == [3]
        assert ds.get("test")[1][0, 0] == 2


@given(st.lists(st.sampled_from(["x", "y", "zz", "", "é"]), min_size=1, max_size=30))
def test_encoding_round_trip(values):
    enc = CategoryEncoder().fit(values)
    assert enc.decode(enc.transform(values)) == values


class TestSplit:
    def test_sizes(self):
        parts = split_dataset(10, (0.8, 0.1, 0.1), seed=0)
        assert [len(p) for p in parts] == [8, 1, 1]
        assert sorted(np.concatenate(parts)) == list(range(10))

    def test_deterministic(self):
        a = split_dataset(50, seed=3)
        b = split_dataset(50, seed=3)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_empty_split_rejected(self):
        with pytest.raises(DataError):
            split_dataset(10, (1, 0, 0))
        with pytest.raises(DataError):
            split_dataset(3, (0.9, 0.05, 0.05))


class TestQuantile:
    def test_median_maps_near_zero(self):
        x = np.random.default_rng(0).exponential(size=5000)
        state = fit_quantile(x, seed=0)
        assert abs(apply_quantile(state, np.array([np.median(x)]))[0]) < 0.05

    def test_uniform_becomes_normal(self):
        x = np.random.default_rng(1).uniform(size=10_000)
        z = fit_quantile(x, seed=1).transform(x)
        assert stats.kstest(z, "norm").statistic < 0.02

    @settings(deadline=None, max_examples=25)
    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_monotone(self, a, b):
        x = np.random.default_rng(2).standard_normal(500)
        state = _QT_CACHE.setdefault("state", fit_quantile(x, seed=2))
        lo, hi = sorted((a, b))
        ta, tb = state.transform(np.array([lo, hi]))
        assert ta <= tb

    def test_landmarks_nondecreasing_and_distinct_with_noise(self):
        x = np.repeat([0.0, 1.0, 2.0], 400)
        state = QuantileNormalizer(seed=0).fit(x)
        refs = state.references[:, 0]
        assert np.all(np.diff(refs) >= 0)
        assert len(np.unique(refs)) > 3

    def test_clamps_outside_range(self):
        x = np.random.default_rng(3).standard_normal(1000)
        state = fit_quantile(x)
        z = state.transform(np.array([-100.0, x.min() - 1e-3, 100.0, x.max() + 1e-3]))
        assert z[0] == z[1] and z[2] == z[3]

    def test_landmark_count(self):
        state = fit_quantile(np.arange(300.0))
        assert state.references.shape == (300, 1)


_QT_CACHE: dict = {}


class TestStandardize:
    def test_reference_values(self):
        s = Standardizer.fit(np.array([0.0, 2.0]))
        np.testing.assert_array_equal(standardize(s, np.array([0.0, 2.0])), [-1.0, 1.0])

    def test_idempotent_on_standardized_column(self):
        x = np.random.default_rng(0).standard_normal(100)
        z = Standardizer.fit(x).transform(x)
        assert np.abs(Standardizer.fit(z).transform(z) - z).max() < 1e-12

    def test_constant_column_rejected(self):
        with pytest.raises(PreprocessingError):
            Standardizer.fit(np.ones(5))


class TestTargetScaler:
    def test_round_trip(self):
        y = np.random.default_rng(0).normal(5, 3, 50)
        s = TargetScaler.fit(y)
        assert np.abs(s.unscale(s.scale(y)) - y).max() < 1e-12

    def test_reference_values(self):
        np.testing.assert_array_equal(TargetScaler.fit(np.array([0.0, 2.0])).scale(np.array([0.0, 2.0])), [-1, 1])

    def test_zero_std(self):
        with pytest.raises(PreprocessingError):
            TargetScaler.fit(np.full(4, 3.0))


def _toy_dataset(seed=0):
    rng = np.random.default_rng(seed)
    x = {k: rng.exponential(size=(n, 3)) for k, n in (("train", 200), ("val", 50), ("test", 50))}
    y = {k: v.sum(axis=1) * 10 + 4 for k, v in x.items()}
    return TabularDataset("regression", x, {}, y)


def test_preprocessing_depends_only_on_train():
    ds = _toy_dataset()
    out1, state1 = preprocess(ds, "quantile", seed=0)
    mutated = ds.replace(
        x_num={k: (v if k == "train" else v * 100) for k, v in ds._x_num.items()},
        y={k: (v if k == "train" else v - 50) for k, v in ds._y.items()},
    )
    out2, state2 = preprocess(mutated, "quantile", seed=0)
    np.testing.assert_array_equal(state1.numerical.references, state2.numerical.references)
    assert state1.target.mean == state2.target.mean and state1.target.std == state2.target.std
    np.testing.assert_array_equal(out1.get("train")[0], out2.get("train")[0])


def test_preprocessing_deterministic():
    a, _ = preprocess(_toy_dataset(), "quantile", seed=4)
    b, _ = preprocess(_toy_dataset(), "quantile", seed=4)
    np.testing.assert_array_equal(a.get("val")[0], b.get("val")[0])


def test_val_test_scaled_with_train_stats():
    ds = _toy_dataset()
    out, state = preprocess(ds, "none")
    y_train = ds.get("train")[2]
    np.testing.assert_allclose(out.get("val")[2], (ds.get("val")[2] - y_train.mean()) / y_train.std())


class TestMetrics:
    def test_perfect(self):
        y = np.array([1.0, 2.0, 3.0])
        assert rmse(y, y) == 0.0
        assert accuracy([1, 0, 2], [1, 0, 2]) == 1.0

    def test_values(self):
        assert rmse([0, 0], [1, 1]) == 1.0
        assert accuracy([1, 0, 1], [1, 1, 1]) == pytest.approx(2 / 3)


def test_binary_cache_round_trip(tmp_path):
    ds = TabularDataset(
        "multiclass",
        {k: np.random.default_rng(0).standard_normal((4, 2)) for k in ("train", "val", "test")},
        {k: np.array([[0, 1], [1, 0], [2, 1], [0, 0]]) for k in ("train", "val", "test")},
        {k: np.array([0, 1, 2, 1]) for k in ("train", "val", "test")},
        cardinalities=[3, 2],
        n_classes=3,
    )
    ds.save(tmp_path / "ds.npz")
    back = TabularDataset.load(tmp_path / "ds.npz")
    for split in ("train", "val", "test"):
        for a, b in zip(ds.get(split), back.get(split)):
            assert a.tobytes() == b.tobytes() and a.dtype == b.dtype
    assert back.cardinalities == [3, 2] and back.n_classes == 3


def test_test_reads_are_counted():
    ds = _toy_dataset()
    ds.get("train")
    ds.get("val")
    assert ds.test_reads == 0
    ds.get("test")
    assert ds.test_reads == 1
