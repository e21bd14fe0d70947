"""Cohort-relative feature engineering and its exact inverse.

Engineered features are expressed as standard scores against the learner's
cohort (programme plus academic year by default), so that a value of 0 sits
on the cohort mean and 1 sits one standard deviation above it. The stored
per-cohort means and deviations also drive the reverse mapping back into raw
units for advisor-facing output.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataset import Dataset, LearnerRecord

STATS_FORMAT = 1


class StatsError(KeyError):
    """A required (cohort, feature) statistic is absent or invalid."""


class DegenerateCohortWarning(UserWarning):
    """A cohort with zero spread was standardized; z defaults to 0."""


@dataclass(frozen=True)
class CohortStats:
    cohort_key: str
    feature_name: str
    mu: float
    sigma: float  # population standard deviation, raw units
    n: int

    def __post_init__(self):
        if self.sigma < 0:
            raise StatsError(f"{self.cohort_key}/{self.feature_name}: sigma < 0")
        if self.n < 1:
            raise StatsError(f"{self.cohort_key}/{self.feature_name}: n < 1")


class StatsStore:
    """Immutable-after-fit lookup of cohort statistics, persistable as CSV."""

    def __init__(self, version: str = "v1"):
        self.version = version
        self._stats: dict[tuple[str, str], CohortStats] = {}

    def put(self, stats: CohortStats) -> None:
        self._stats[(stats.cohort_key, stats.feature_name)] = stats

    def get(self, cohort_key: str, feature_name: str) -> CohortStats:
        try:
            return self._stats[(cohort_key, feature_name)]
        except KeyError:
            raise StatsError(
                f"no statistics for feature {feature_name!r} in cohort {cohort_key!r}"
            ) from None

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._stats

    def __len__(self):
        return len(self._stats)

    def items(self):
        return sorted(self._stats.items())

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write(f"# cohort-stats format={STATS_FORMAT} version={self.version}\n")
            writer = csv.writer(fh)
            writer.writerow(["cohort_key", "feature", "mu", "sigma", "n"])
            for (cohort, feat), s in self.items():
                writer.writerow([cohort, feat, repr(s.mu), repr(s.sigma), s.n])

    @classmethod
    def load(cls, path: str | Path) -> "StatsStore":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("# cohort-stats format="):
            raise StatsError(f"{path} is not a cohort statistics file")
        head = dict(tok.split("=", 1) for tok in lines[0][2:].split() if "=" in tok)
        if int(head.get("format", -1)) != STATS_FORMAT:
            raise StatsError(f"unsupported statistics format {head.get('format')!r}")
        store = cls(version=head.get("version", ""))
        reader = csv.reader(lines[1:])
        next(reader)  # header
        for cohort, feat, mu, sigma, n in reader:
            store.put(CohortStats(cohort, feat, float(mu), float(sigma), int(n)))
        return store


def default_cohort_key(record: LearnerRecord) -> str:
    programme = record.raw_values.get("programme_title") or "unknown"
    return f"{programme}|{record.academic_year}"


def fit_cohort_stats(
    raw: Dataset,
    cohort_of=default_cohort_key,
    features: list[str] | None = None,
    version: str = "v1",
) -> StatsStore:
    """Compute per-cohort mean and population deviation of raw values.

    Missing cells are skipped. A (cohort, feature) pair with no observed
    value at all raises, naming both.
    """
    if features is None:
        features = raw.schema.engineered_features()
    store = StatsStore(version=version)
    buckets: dict[tuple[str, str], list[float]] = {}
    cohorts: list[str] = []
    for rec in raw.records:
        cohort = cohort_of(rec)
        cohorts.append(cohort)
        for name in features:
            v = rec.raw_values.get(name)
            if v is not None:
                buckets.setdefault((cohort, name), []).append(float(v))
    for cohort in sorted(set(cohorts)):
        for name in features:
            values = buckets.get((cohort, name))
            if not values:
                raise StatsError(
                    f"feature {name!r} has no observed values in cohort {cohort!r}"
                )
            arr = np.asarray(values, dtype=np.float64)
            store.put(
                CohortStats(cohort, name, float(arr.mean()), float(arr.std()), len(arr))
            )
    return store


def zscore(x: float, s: CohortStats) -> float:
    """Standard score of a raw value; 0 with a warning when the cohort has
    no spread."""
    if s.sigma == 0:
        warnings.warn(
            f"cohort {s.cohort_key!r} has zero spread for {s.feature_name!r}; "
            "standard score defaults to 0",
            DegenerateCohortWarning,
            stacklevel=2,
        )
        return 0.0
    return (float(x) - s.mu) / s.sigma


def zscore_inverse(z: float, s: CohortStats) -> float:
    """Raw value whose standard score is z. Exact inverse of :func:`zscore`
    whenever sigma > 0."""
    return s.mu + float(z) * s.sigma


def engineer(d: Dataset, store: StatsStore, cohort_of=default_cohort_key) -> Dataset:
    """Replace raw values of engineered features with their cohort z-scores.

    Missing cells stay missing; non-engineered features pass through.
    """
    engineered = set(d.schema.engineered_features())
    records = []
    for rec in d.records:
        cohort = cohort_of(rec)
        values = dict(rec.raw_values)
        for name in engineered:
            v = values.get(name)
            if v is not None:
                values[name] = zscore(float(v), store.get(cohort, name))
        records.append(replace(rec, raw_values=values))
    return Dataset(d.schema, records, d.provenance)


_INTEGER_TOKENS = (
    "count", "papers", "credits", "posts", "pages", "quiz",
    "submission", "assessment", "viewed", "taken", "passed", "age", "year",
)


def decimals_for(feature_name: str) -> int:
    """Display precision for a raw value: grades and percentages keep one
    decimal, counts round to integers."""
    n = feature_name.lower()
    if "percent" in n or "grade" in n or "mark" in n:
        return 1
    if any(tok in n for tok in _INTEGER_TOKENS):
        return 0
    return 2


def round_raw(feature_name: str, value: float) -> float:
    return round(float(value), decimals_for(feature_name))
