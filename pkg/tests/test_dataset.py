import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelnet import (
    DataContractError,
    FeatureMatrix,
    LabelMatrix,
    MultiLabelDataset,
    load_csv,
    load_mulan,
    save_csv,
    split_folds,
)


class TestLoadCsv:
    def test_toy_matrix_matches_rows(self, toy_dataset, toy_labels):
        assert toy_dataset.labels == toy_labels
        assert toy_dataset.features.n_features == 0

    def test_no_labels_declared(self):
        with pytest.raises(DataContractError, match="no labels declared"):
            load_csv(io.StringIO("A,B\n0,1\n"), set())

    def test_missing_label_column(self):
        with pytest.raises(DataContractError, match="label column"):
            load_csv(io.StringIO("A,B\n0,1\n"), {"A", "Z"})

    def test_non_binary_label_cell_named(self):
        src = io.StringIO("A,B\n0,1\n2,0\n")
        with pytest.raises(DataContractError, match=r"'A', row 2.*'2'"):
            load_csv(src, {"A", "B"})

    def test_ragged_row_reported(self):
        src = io.StringIO("A,B,x\n0,1\n")
        with pytest.raises(DataContractError, match="row 1"):
            load_csv(src, {"A", "B"})

    def test_features_split_numeric_nominal(self):
        src = io.StringIO("f1,f2,y\n1.5,red,1\n?,blue,0\n2,?,1\n")
        ds = load_csv(src, {"y"})
        assert ds.features.feature_names == ("f1", "f2")
        f1, f2 = ds.features.columns
        assert f1.dtype.kind == "f" and np.isnan(f1[1])
        assert f2.dtype.kind == "O" and f2[2] is None and f2[0] == "red"


class TestSaveCsvRoundTrip:
    def test_toy_round_trip(self, toy_dataset):
        buf = io.StringIO()
        save_csv(toy_dataset, buf)
        reloaded = load_csv(io.StringIO(buf.getvalue()), set("ABCDEF"))
        assert reloaded.labels == toy_dataset.labels
        assert reloaded.features == toy_dataset.features

    @given(data=st.data())
    @settings(max_examples=50, deadline=None)
    def test_round_trip_property(self, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        n = data.draw(st.integers(1, 12))
        n_labels = data.draw(st.integers(1, 4))
        n_numeric = data.draw(st.integers(0, 3))
        n_nominal = data.draw(st.integers(0, 3))

        labels = LabelMatrix(
            tuple(f"y{i}" for i in range(n_labels)),
            rng.random((n, n_labels)) < 0.5,
        )
        columns = []
        names = []
        for i in range(n_numeric):
            col = rng.normal(size=n)
            col[rng.random(n) < 0.2] = np.nan
            columns.append(col)
            names.append(f"num{i}")
        for i in range(n_nominal):
            col = np.array(
                [rng.choice(["red", "green", "blue"]) for _ in range(n)],
                dtype=object,
            )
            col[rng.random(n) < 0.2] = None
            # An all-missing column carries no type evidence, so keep one
            # token present; loaded datasets always satisfy this.
            col[0] = "red"
            columns.append(col)
            names.append(f"tok{i}")
        dataset = MultiLabelDataset(
            FeatureMatrix(n, tuple(names), tuple(columns)), labels
        )

        buf = io.StringIO()
        save_csv(dataset, buf)
        reloaded = load_csv(
            io.StringIO(buf.getvalue()), set(labels.label_names)
        )
        assert reloaded.labels == dataset.labels
        assert reloaded.features == dataset.features


MINIMAL_ARFF = """\
% sample
@relation tiny
@attribute f1 numeric
@attribute y1 {0,1}
@data
3.5,1
0.5,0
"""

MINIMAL_XML = '<labels xmlns="http://example.org/labels"><label name="y1"/></labels>'


class TestLoadMulan:
    def test_minimal_pair(self):
        ds = load_mulan(io.StringIO(MINIMAL_ARFF), io.StringIO(MINIMAL_XML))
        assert ds.labels.label_names == ("y1",)
        assert ds.labels.values[:, 0].tolist() == [True, False]
        assert ds.features.feature_names == ("f1",)
        assert ds.features.columns[0].tolist() == [3.5, 0.5]
        assert ds.name == "tiny"

    def test_sparse_equals_dense(self):
        arff = """\
@relation s
@attribute f1 numeric
@attribute y1 {0,1}
@attribute f2 numeric
@attribute y2 {0,1}
@data
{1 1, 3 1}
0,1,0,1
"""
        ds = load_mulan(
            io.StringIO(arff),
            io.StringIO(
                '<labels><label name="y1"/><label name="y2"/></labels>'
            ),
        )
        assert np.array_equal(ds.labels.values[0], ds.labels.values[1])
        assert ds.features.columns[0][0] == 0.0

    def test_label_missing_from_attributes(self):
        with pytest.raises(DataContractError, match="'Z'"):
            load_mulan(
                io.StringIO(MINIMAL_ARFF),
                io.StringIO('<labels><label name="Z"/></labels>'),
            )

    def test_unsupported_attribute_type(self):
        arff = "@relation r\n@attribute txt string\n@attribute y1 {0,1}\n@data\nhello,1\n"
        with pytest.raises(DataContractError, match="'txt'"):
            load_mulan(io.StringIO(arff), io.StringIO(MINIMAL_XML))

    def test_nominal_feature_and_comments(self):
        arff = """\
@relation r
% feature comment
@attribute color {red, green, 'dark blue'}
@attribute y1 {0,1}
@data
'dark blue',1
?,0
"""
        ds = load_mulan(io.StringIO(arff), io.StringIO(MINIMAL_XML))
        assert ds.features.columns[0][0] == "dark blue"
        assert ds.features.columns[0][1] is None

    def test_label_must_be_binary_nominal(self):
        arff = "@relation r\n@attribute y1 {a,b}\n@data\na\n"
        with pytest.raises(DataContractError, match="nominal over"):
            load_mulan(io.StringIO(arff), io.StringIO(MINIMAL_XML))


class TestSplitFolds:
    def test_sizes_differ_by_at_most_one(self, toy_dataset):
        split = split_folds(toy_dataset, 5, seed=7)
        sizes = [len(split.test_indices(k)) for k in range(5)]
        assert sizes == [2, 2, 2, 2, 2]

    def test_out_of_range_fold_count(self, toy_dataset):
        with pytest.raises(DataContractError, match="fold_count"):
            split_folds(toy_dataset, 11, seed=0)
        with pytest.raises(DataContractError, match="fold_count"):
            split_folds(toy_dataset, 1, seed=0)

    def test_deterministic_for_seed(self, toy_dataset):
        a = split_folds(toy_dataset, 5, seed=7)
        b = split_folds(toy_dataset, 5, seed=7)
        assert a == b
        c = split_folds(toy_dataset, 5, seed=8)
        assert a != c

    @given(
        n=st.integers(2, 40),
        folds=st.integers(2, 10),
        seed=st.integers(0, 1000),
    )
    @settings(max_examples=60, deadline=None)
    def test_partition_property(self, n, folds, seed):
        if folds > n:
            folds = n
        rng = np.random.default_rng(0)
        dataset = MultiLabelDataset(
            FeatureMatrix(n, (), ()),
            LabelMatrix(("y",), rng.random((n, 1)) < 0.5),
        )
        split = split_folds(dataset, folds, seed)
        all_indices = np.concatenate(
            [split.test_indices(k) for k in range(folds)]
        )
        assert sorted(all_indices.tolist()) == list(range(n))
        sizes = [len(split.test_indices(k)) for k in range(folds)]
        assert max(sizes) - min(sizes) <= 1
