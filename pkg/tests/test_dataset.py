import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_records, tiny_dataset, tiny_schema
from riskpath.dataset import (
    Dataset,
    EmptyDataError,
    EncodingError,
    FeatureSchema,
    FeatureSpec,
    LearnerRecord,
    RowError,
    SchemaError,
    grouped_kfold,
    impute_and_encode,
    load_dataset,
    write_dataset,
)
from riskpath.synth import default_generator_config, generate_synthetic
from dataclasses import replace


def write_schema(tmp_path, schema):
    path = tmp_path / "schema.json"
    schema.to_manifest(path)
    return path


def write_csv(tmp_path, header, rows, name="records.csv"):
    path = tmp_path / name
    lines = [",".join(header)] + [",".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


HEADER = ["learner_id", "academic_year", "outcome", "grade", "pages", "papers_failed", "mode"]


class TestLoad:
    def test_well_formed_file(self, tmp_path):
        schema_path = write_schema(tmp_path, tiny_schema())
        rows = [
            ["a1", 2020, "completed", 62.0, 120, 1, "online"],
            ["a2", 2021, "non_completed", 44.0, 30, 3, "on_campus"],
            ["a3", 2020, "completed", 71.5, 300, 0, "mixed"],
        ]
        d = load_dataset(write_csv(tmp_path, HEADER, rows), schema_path)
        assert len(d) == 3
        assert d.records[0].raw_values["grade"] == 62.0
        assert d.records[1].outcome == 0

    def test_unknown_column_named_in_error(self, tmp_path):
        schema_path = write_schema(tmp_path, tiny_schema())
        header = HEADER + ["favourite_colour"]
        path = write_csv(tmp_path, header, [["a1", 2020, "completed", 1, 2, 3, "online", "red"]])
        with pytest.raises(SchemaError, match="favourite_colour"):
            load_dataset(path, schema_path)

    def test_empty_file_distinct_error(self, tmp_path):
        schema_path = write_schema(tmp_path, tiny_schema())
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        with pytest.raises(EmptyDataError):
            load_dataset(empty, schema_path)
        header_only = write_csv(tmp_path, HEADER, [], name="header_only.csv")
        with pytest.raises(EmptyDataError):
            load_dataset(header_only, schema_path)

    def test_unparseable_numeric_names_row(self, tmp_path):
        schema_path = write_schema(tmp_path, tiny_schema())
        rows = [
            ["a1", 2020, "completed", 62.0, 120, 1, "online"],
            ["a2", 2020, "completed", "sixty", 120, 1, "online"],
        ]
        with pytest.raises(RowError, match="row 1"):
            load_dataset(write_csv(tmp_path, HEADER, rows), schema_path)

    def test_missing_learner_id_rejected(self, tmp_path):
        schema_path = write_schema(tmp_path, tiny_schema())
        rows = [["", 2020, "completed", 62.0, 120, 1, "online"]]
        with pytest.raises(RowError, match="learner_id"):
            load_dataset(write_csv(tmp_path, HEADER, rows), schema_path)

    def test_missing_cells_preserved(self, tmp_path):
        schema_path = write_schema(tmp_path, tiny_schema())
        rows = [["a1", 2020, "completed", "", 120, 1, "online"]]
        d = load_dataset(write_csv(tmp_path, HEADER, rows), schema_path)
        assert d.records[0].raw_values["grade"] is None

    def test_generator_output_round_trips(self, tmp_path):
        cfg = replace(default_generator_config(), n_learners=60)
        d = generate_synthetic(cfg, seed=3)
        write_dataset(d, tmp_path / "out.csv")
        d.schema.to_manifest(tmp_path / "schema.json")
        d2 = load_dataset(tmp_path / "out.csv", tmp_path / "schema.json")
        assert d2 == d


class TestSchema:
    def test_feedback_requires_prescriptive_model(self):
        with pytest.raises(SchemaError):
            FeatureSpec("x", "numeric", prescriptive_feedback=True)

    def test_range_ordering(self):
        with pytest.raises(SchemaError):
            FeatureSpec("x", "numeric", range=(2.0, 1.0))

    def test_duplicate_categories(self):
        with pytest.raises(SchemaError):
            FeatureSpec("x", "categorical", categories=("a", "a"))

    def test_unknown_feature_in_record_rejected(self):
        schema = tiny_schema()
        rec = LearnerRecord("a1", 2020, {"nonexistent": 1.0}, 1)
        with pytest.raises(SchemaError, match="nonexistent"):
            Dataset(schema, [rec])


class TestEncoding:
    def test_missing_numeric_becomes_zero(self):
        schema = tiny_schema()
        d = Dataset(schema, make_records(
            [{"grade": None, "pages": 10.0, "papers_failed": 0.0, "mode": "online"}], [1]))
        enc = impute_and_encode(d)
        assert enc.X[0, enc.columns.index("grade")] == 0.0

    def test_four_categories_two_columns_msb_first(self):
        schema = tiny_schema()
        d = Dataset(schema, make_records(
            [{"grade": 1.0, "pages": 1.0, "papers_failed": 0.0, "mode": "mixed"}], [1]))
        enc = impute_and_encode(d)
        cols = [i for i, c in enumerate(enc.columns) if c.startswith("mode__")]
        assert len(cols) == 2
        # "mixed" sits at index 2 -> bits (1, 0)
        assert enc.X[0, cols].tolist() == [1.0, 0.0]

    def test_single_category_one_constant_column(self):
        schema = FeatureSchema([FeatureSpec("only", "categorical", categories=("sole",))])
        d = Dataset(schema, make_records([{"only": "sole"}, {"only": "sole"}], [1, 0]))
        enc = impute_and_encode(d)
        assert enc.X.shape == (2, 1)
        assert (enc.X == 0.0).all()

    def test_unknown_label_error_names_label_and_feature(self):
        schema = tiny_schema()
        d = Dataset(schema, make_records(
            [{"grade": 1.0, "pages": 1.0, "papers_failed": 0.0, "mode": "teleport"}], [1]))
        with pytest.raises(EncodingError, match="mode.*teleport"):
            impute_and_encode(d)

    def test_missing_categorical_requires_missing_label(self):
        schema = tiny_schema()
        d = Dataset(schema, make_records(
            [{"grade": 1.0, "pages": 1.0, "papers_failed": 0.0, "mode": None}], [1]))
        with pytest.raises(EncodingError, match="__missing__"):
            impute_and_encode(d)

    @given(st.integers(min_value=1, max_value=40))
    @settings(max_examples=25, deadline=None)
    def test_encoding_injectivity(self, n_categories):
        labels = tuple(f"c{i}" for i in range(n_categories))
        schema = FeatureSchema([FeatureSpec("f", "categorical", categories=labels)])
        d = Dataset(schema, make_records([{"f": lab} for lab in labels],
                                         [1] * n_categories))
        enc = impute_and_encode(d)
        assert enc.X.shape[1] == math.ceil(math.log2(max(n_categories, 2)))
        patterns = {tuple(row) for row in enc.X.tolist()}
        assert len(patterns) == n_categories

    def test_imputation_idempotence(self):
        schema = tiny_schema()
        with_missing = make_records(
            [{"grade": None, "pages": 5.0, "papers_failed": 1.0, "mode": "online"}], [1])
        pre_imputed = make_records(
            [{"grade": 0.0, "pages": 5.0, "papers_failed": 1.0, "mode": "online"}], [1])
        enc1 = impute_and_encode(Dataset(schema, with_missing))
        enc2 = impute_and_encode(Dataset(schema, pre_imputed))
        assert np.array_equal(enc1.X, enc2.X)

    def test_layout_traces_columns_to_features(self):
        enc = impute_and_encode(tiny_dataset())
        groups = dict(enc.layout.feature_groups())
        assert set(groups) == {"grade", "pages", "papers_failed", "mode"}
        assert len(groups["mode"]) == 2


def dataset_with_learners(learner_rows: dict[str, int]) -> Dataset:
    schema = tiny_schema()
    records = []
    for learner_id, n_rows in learner_rows.items():
        for j in range(n_rows):
            records.append(LearnerRecord(
                learner_id, 2018 + j,
                {"grade": 50.0, "pages": 10.0, "papers_failed": 0.0, "mode": "online"},
                outcome=1,
            ))
    return Dataset(schema, records)


class TestGroupedFolds:
    def test_leave_one_learner_out(self):
        d = dataset_with_learners({f"L{i}": 2 for i in range(10)})
        folds = grouped_kfold(d, k=10, seed=0)
        for _, test_idx in folds:
            ids = {d.records[i].learner_id for i in test_idx}
            assert len(ids) == 1

    def test_multi_year_learner_stays_together(self):
        d = dataset_with_learners({"multi": 3, **{f"L{i}": 1 for i in range(9)}})
        folds = grouped_kfold(d, k=5, seed=1)
        hits = 0
        for _, test_idx in folds:
            rows = [i for i in test_idx if d.records[i].learner_id == "multi"]
            if rows:
                hits += 1
                assert len(rows) == 3
        assert hits == 1

    def test_partition_covers_all_rows(self):
        d = dataset_with_learners({f"L{i}": 1 + i % 3 for i in range(20)})
        folds = grouped_kfold(d, k=4, seed=2)
        all_test = np.concatenate([test for _, test in folds])
        assert sorted(all_test.tolist()) == list(range(len(d)))

    def test_no_learner_straddles_any_fold(self):
        d = dataset_with_learners({f"L{i}": 1 + i % 4 for i in range(50)})
        for train_idx, test_idx in grouped_kfold(d, k=10, seed=3):
            train_ids = {d.records[i].learner_id for i in train_idx}
            test_ids = {d.records[i].learner_id for i in test_idx}
            assert not train_ids & test_ids

    def test_seed_determinism_and_variation(self):
        d = dataset_with_learners({f"L{i}": 1 for i in range(50)})
        a = grouped_kfold(d, k=5, seed=11)
        b = grouped_kfold(d, k=5, seed=11)
        for (tr1, te1), (tr2, te2) in zip(a, b):
            assert np.array_equal(tr1, tr2) and np.array_equal(te1, te2)
        c = grouped_kfold(d, k=5, seed=12)
        assert any(
            not np.array_equal(te1, te2) for (_, te1), (_, te2) in zip(a, c)
        )

    def test_k_exceeding_learner_count(self):
        d = dataset_with_learners({"L0": 2, "L1": 1})
        with pytest.raises(ValueError):
            grouped_kfold(d, k=3, seed=0)
