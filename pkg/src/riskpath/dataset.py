"""Learner records and schema: CSV loading, binary encoding, grouped splits.

A dataset is a flat table of yearly learner snapshots. Each learner may own
several rows (one per academic year), so all train/test splitting is done by
learner identity, never by row.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MISSING_LABEL = "__missing__"

OUTCOME_COMPLETED = 1
OUTCOME_NON_COMPLETED = 0

_OUTCOME_LABELS = {
    "completed": OUTCOME_COMPLETED,
    "non_completed": OUTCOME_NON_COMPLETED,
    "1": OUTCOME_COMPLETED,
    "0": OUTCOME_NON_COMPLETED,
}

_RESERVED_COLUMNS = ("learner_id", "academic_year", "outcome")


class SchemaError(ValueError):
    """Schema manifest is invalid, or a file column does not match it."""


class RowError(ValueError):
    """A single data row is malformed; carries the offending row index."""

    def __init__(self, row_index: int, message: str):
        super().__init__(f"row {row_index}: {message}")
        self.row_index = row_index


class EmptyDataError(ValueError):
    """Records file holds no data rows."""


class EncodingError(ValueError):
    """A cell value cannot be encoded against the schema."""


@dataclass(frozen=True)
class FeatureSpec:
    """One feature column: its type, modelling roles and value domain.

    ``predictive`` marks features the risk model consumes,
    ``prescriptive_model`` marks inputs of the actionability model and
    ``prescriptive_feedback`` marks the subset that may appear in remedial
    advice. ``engineered`` features are cohort z-scored before modelling.
    """

    name: str
    kind: str  # "numeric" | "categorical"
    predictive: bool = False
    prescriptive_model: bool = False
    prescriptive_feedback: bool = False
    mutable: bool = False
    engineered: bool = False
    range: tuple[float, float] | None = None
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise SchemaError("feature name must be non-empty")
        if self.kind not in ("numeric", "categorical"):
            raise SchemaError(f"{self.name}: unknown kind {self.kind!r}")
        if self.prescriptive_feedback and not self.prescriptive_model:
            raise SchemaError(
                f"{self.name}: feedback features must also be prescriptive-model features"
            )
        if self.kind == "numeric":
            if self.range is not None and self.range[0] > self.range[1]:
                raise SchemaError(f"{self.name}: range lo > hi")
        else:
            if not self.categories:
                raise SchemaError(f"{self.name}: categorical feature needs categories")
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"{self.name}: duplicate category labels")

    @property
    def is_numeric(self) -> bool:
        return self.kind == "numeric"

    def encoded_width(self) -> int:
        if self.is_numeric:
            return 1
        return math.ceil(math.log2(max(len(self.categories), 2)))


class FeatureSchema:
    """Ordered collection of :class:`FeatureSpec`, addressable by name."""

    def __init__(self, features: list[FeatureSpec]):
        names = [f.name for f in features]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names in schema")
        self.features = list(features)
        self._by_name = {f.name: f for f in features}

    def __iter__(self):
        return iter(self.features)

    def __len__(self):
        return len(self.features)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __getitem__(self, name: str) -> FeatureSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def __eq__(self, other):
        return isinstance(other, FeatureSchema) and self.features == other.features

    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def predictive_features(self) -> list[str]:
        return [f.name for f in self.features if f.predictive]

    def prescriptive_features(self) -> list[str]:
        return [f.name for f in self.features if f.prescriptive_model]

    def feedback_features(self) -> list[str]:
        return [f.name for f in self.features if f.prescriptive_feedback]

    def engineered_features(self) -> list[str]:
        return [f.name for f in self.features if f.engineered]

    @classmethod
    def from_manifest(cls, path: str | Path) -> "FeatureSchema":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema manifest does not parse: {exc}") from exc
        if not isinstance(doc, dict) or "features" not in doc:
            raise SchemaError("schema manifest must be an object with a 'features' list")
        specs = []
        for entry in doc["features"]:
            rng = entry.get("range")
            specs.append(
                FeatureSpec(
                    name=entry["name"],
                    kind=entry["kind"],
                    predictive=bool(entry.get("predictive", False)),
                    prescriptive_model=bool(entry.get("prescriptive_model", False)),
                    prescriptive_feedback=bool(entry.get("prescriptive_feedback", False)),
                    mutable=bool(entry.get("mutable", False)),
                    engineered=bool(entry.get("engineered", False)),
                    range=tuple(rng) if rng is not None else None,
                    categories=tuple(entry.get("categories", ())),
                )
            )
        return cls(specs)

    def to_manifest(self, path: str | Path) -> None:
        entries = []
        for f in self.features:
            entry = {
                "name": f.name,
                "kind": f.kind,
                "predictive": f.predictive,
                "prescriptive_model": f.prescriptive_model,
                "prescriptive_feedback": f.prescriptive_feedback,
                "mutable": f.mutable,
                "engineered": f.engineered,
            }
            if f.range is not None:
                entry["range"] = list(f.range)
            if f.categories:
                entry["categories"] = list(f.categories)
            entries.append(entry)
        Path(path).write_text(
            json.dumps({"features": entries}, indent=2) + "\n", encoding="utf-8"
        )


@dataclass
class LearnerRecord:
    """One learner-year snapshot. ``raw_values`` maps feature name to a
    number, a category label, or None for a missing cell."""

    learner_id: str
    academic_year: int
    raw_values: dict
    outcome: int | None = None

    def __post_init__(self):
        if not self.learner_id:
            raise ValueError("learner_id must be non-empty")


@dataclass(frozen=True)
class Provenance:
    source: str = ""
    version: str = ""


@dataclass
class Dataset:
    schema: FeatureSchema
    records: list[LearnerRecord]
    provenance: Provenance = field(default_factory=Provenance, compare=False)

    def __post_init__(self):
        if not self.records:
            raise EmptyDataError("dataset holds no records")
        known = set(self.schema.names())
        for rec in self.records:
            unknown = set(rec.raw_values) - known
            if unknown:
                raise SchemaError(
                    f"record {rec.learner_id}/{rec.academic_year} carries unknown "
                    f"features: {sorted(unknown)}"
                )

    def __len__(self):
        return len(self.records)

    def learner_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for rec in self.records:
            seen.setdefault(rec.learner_id, None)
        return list(seen)

    def value_rows(self) -> list[dict]:
        return [dict(rec.raw_values) for rec in self.records]

    def outcomes(self) -> np.ndarray | None:
        if any(rec.outcome is None for rec in self.records):
            return None
        return np.array([rec.outcome for rec in self.records], dtype=np.int64)

    def column(self, feature: str) -> list:
        self.schema[feature]
        return [rec.raw_values.get(feature) for rec in self.records]


def load_dataset(records_path: str | Path, schema_path: str | Path) -> Dataset:
    """Read a comma-separated records file against a schema manifest.

    The file must carry a header row naming ``learner_id``, ``academic_year``,
    ``outcome`` and every schema feature. A literal empty field is a missing
    value and is preserved as None, not imputed.
    """
    schema = FeatureSchema.from_manifest(schema_path)
    path = Path(records_path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise EmptyDataError(f"{path} is empty")

    reader = csv.reader(text.splitlines())
    header = next(reader)
    known = set(schema.names()) | set(_RESERVED_COLUMNS)
    for col in header:
        if col not in known:
            raise SchemaError(f"column {col!r} is not in the schema")
    missing_cols = (set(schema.names()) | set(_RESERVED_COLUMNS)) - set(header)
    if missing_cols:
        raise SchemaError(f"records file lacks columns: {sorted(missing_cols)}")
    col_index = {name: i for i, name in enumerate(header)}

    records = []
    for row_idx, row in enumerate(reader):
        if not row:
            continue
        if len(row) != len(header):
            raise RowError(row_idx, f"expected {len(header)} fields, got {len(row)}")
        learner_id = row[col_index["learner_id"]].strip()
        if not learner_id:
            raise RowError(row_idx, "missing learner_id, grouping is impossible")
        try:
            year = int(row[col_index["academic_year"]])
        except ValueError:
            raise RowError(
                row_idx, f"academic_year {row[col_index['academic_year']]!r} is not an integer"
            ) from None
        outcome_cell = row[col_index["outcome"]].strip()
        if outcome_cell == "":
            raise RowError(row_idx, "outcome label is missing")
        if outcome_cell not in _OUTCOME_LABELS:
            raise RowError(row_idx, f"unknown outcome label {outcome_cell!r}")
        outcome = _OUTCOME_LABELS[outcome_cell]

        values: dict = {}
        for spec in schema:
            cell = row[col_index[spec.name]]
            if cell == "":
                values[spec.name] = None
            elif spec.is_numeric:
                try:
                    values[spec.name] = float(cell)
                except ValueError:
                    raise RowError(
                        row_idx, f"feature {spec.name!r}: {cell!r} is not numeric"
                    ) from None
            else:
                if cell not in spec.categories:
                    raise RowError(
                        row_idx, f"feature {spec.name!r}: label {cell!r} not in schema"
                    )
                values[spec.name] = cell
        records.append(LearnerRecord(learner_id, year, values, outcome))

    if not records:
        raise EmptyDataError(f"{path} holds a header but no data rows")
    return Dataset(schema, records, Provenance(source=str(path)))


def write_dataset(d: Dataset, path: str | Path) -> None:
    """Write records as UTF-8 CSV, empty field for missing. Inverse of
    :func:`load_dataset` up to provenance."""
    path = Path(path)
    header = list(_RESERVED_COLUMNS) + d.schema.names()
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in d.records:
            outcome = "completed" if rec.outcome == OUTCOME_COMPLETED else "non_completed"
            row = [rec.learner_id, str(rec.academic_year), outcome]
            for spec in d.schema:
                v = rec.raw_values.get(spec.name)
                if v is None:
                    row.append("")
                elif spec.is_numeric:
                    row.append(repr(float(v)))
                else:
                    row.append(str(v))
            writer.writerow(row)


def _category_bits(index: int, width: int) -> tuple[int, ...]:
    # most-significant bit first
    return tuple((index >> (width - 1 - b)) & 1 for b in range(width))


class EncodingLayout:
    """Column layout of an encoded matrix and the means to reproduce it.

    Numeric features occupy one column; a categorical feature with C labels
    occupies ceil(log2(max(C, 2))) binary columns holding the bits of the
    label's index in the schema's ordered category list. Missing numerics
    encode as 0; missing categoricals encode as the ``__missing__`` label,
    which must then be present in the schema's list.
    """

    def __init__(self, schema: FeatureSchema, features: list[str] | None = None):
        self.schema = schema
        self.features = list(features) if features is not None else schema.names()
        for name in self.features:
            schema[name]
        self.columns: list[str] = []
        self.colmap: list[tuple[str, int | None]] = []
        for name in self.features:
            spec = schema[name]
            if spec.is_numeric:
                self.columns.append(name)
                self.colmap.append((name, None))
            else:
                width = spec.encoded_width()
                for b in range(width):
                    self.columns.append(f"{name}__b{b}")
                    self.colmap.append((name, b))

    @property
    def width(self) -> int:
        return len(self.columns)

    def feature_groups(self) -> list[tuple[str, list[int]]]:
        """Source features with the encoded column indices they own."""
        groups: dict[str, list[int]] = {name: [] for name in self.features}
        for idx, (name, _) in enumerate(self.colmap):
            groups[name].append(idx)
        return [(name, groups[name]) for name in self.features]

    def _encode_value(self, spec: FeatureSpec, value) -> list[float]:
        if spec.is_numeric:
            return [0.0 if value is None else float(value)]
        label = MISSING_LABEL if value is None else str(value)
        if label not in spec.categories:
            raise EncodingError(
                f"feature {spec.name!r}: label {label!r} not in schema categories"
            )
        width = spec.encoded_width()
        index = spec.categories.index(label)
        return [float(b) for b in _category_bits(index, width)]

    def encode_row(self, values: dict) -> np.ndarray:
        out = []
        for name in self.features:
            out.extend(self._encode_value(self.schema[name], values.get(name)))
        return np.array(out, dtype=np.float64)

    def encode_rows(self, rows: list[dict]) -> np.ndarray:
        X = np.empty((len(rows), self.width), dtype=np.float64)
        col = 0
        for name in self.features:
            spec = self.schema[name]
            if spec.is_numeric:
                X[:, col] = [
                    0.0 if (v := r.get(name)) is None else float(v) for r in rows
                ]
                col += 1
                continue
            index_of = {label: i for i, label in enumerate(spec.categories)}
            try:
                indices = np.array([
                    index_of[MISSING_LABEL if (v := r.get(name)) is None else str(v)]
                    for r in rows
                ])
            except KeyError as exc:
                raise EncodingError(
                    f"feature {name!r}: label {exc.args[0]!r} not in schema categories"
                ) from None
            width = spec.encoded_width()
            for b in range(width):
                X[:, col + b] = (indices >> (width - 1 - b)) & 1
            col += width
        return X


@dataclass
class EncodedMatrix:
    X: np.ndarray
    layout: EncodingLayout
    y: np.ndarray | None = None
    groups: np.ndarray | None = None

    @property
    def columns(self) -> list[str]:
        return self.layout.columns


def impute_and_encode(d: Dataset, features: list[str] | None = None) -> EncodedMatrix:
    """Impute missing cells and binary-encode categoricals into a matrix.

    Column order is deterministic (schema order, bits MSB first) and the
    returned layout traces every column back to its source feature.
    """
    layout = EncodingLayout(d.schema, features)
    X = layout.encode_rows([rec.raw_values for rec in d.records])
    groups = np.array([rec.learner_id for rec in d.records])
    return EncodedMatrix(X=X, layout=layout, y=d.outcomes(), groups=groups)


def grouped_folds(groups, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Partition row indices into k folds that never split a group.

    Groups (learner ids) are shuffled with a seeded generator and dealt into
    k nearly equal chunks; every row of a group lands in exactly one test
    fold. Deterministic for a fixed seed.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    groups = np.asarray(groups)
    unique = sorted(set(groups.tolist()))
    if k > len(unique):
        raise ValueError(f"k={k} exceeds the {len(unique)} distinct groups")
    rng = np.random.default_rng(seed)
    order = [unique[i] for i in rng.permutation(len(unique))]
    chunks = np.array_split(np.arange(len(order)), k)
    folds = []
    for chunk in chunks:
        test_groups = {order[i] for i in chunk}
        mask = np.array([g in test_groups for g in groups.tolist()])
        folds.append((np.flatnonzero(~mask), np.flatnonzero(mask)))
    return folds


def grouped_kfold(d: Dataset, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    return grouped_folds([rec.learner_id for rec in d.records], k, seed)
