"""Configurable synthetic learner cohorts.

Stands in for institutional student-management and VLE extracts: emits
yearly learner snapshots that conform to the default feature schema, with
outcome-conditional shifts so that downstream models have signal to find.
Generation is fully driven by one seeded generator, so a fixed seed yields
byte-identical datasets.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset, FeatureSchema, FeatureSpec, LearnerRecord, Provenance

MISSING_LABEL = "__missing__"


class ConfigError(ValueError):
    pass


def default_schema() -> FeatureSchema:
    """Feature layout of the synthetic cohort.

    Engineered features are the ones standardized against the cohort before
    modelling; feedback features are the actionable subset remedial advice
    may touch.
    """
    num = FeatureSpec
    return FeatureSchema([
        # learner characteristics
        num("basis_for_admission", "categorical", predictive=True,
            categories=("ncea", "university_entrance", "adult_admission",
                        "discretionary", "international", MISSING_LABEL)),
        num("has_previous_tertiary_study", "categorical", predictive=True,
            categories=("no", "yes")),
        num("highest_school_qualification", "categorical", predictive=True,
            categories=("none", "ncea_l2", "ncea_l3", "ib", "overseas", MISSING_LABEL)),
        num("full_time_status", "categorical", predictive=True,
            prescriptive_model=True, prescriptive_feedback=True, mutable=True,
            categories=("part_time", "full_time")),
        num("study_mode", "categorical", predictive=True,
            prescriptive_model=True, prescriptive_feedback=True, mutable=True,
            categories=("online", "on_campus")),
        num("prior_activity", "categorical", predictive=True,
            categories=("school", "university_student", "employed", "unemployed", "other")),
        num("age", "numeric", predictive=True, prescriptive_model=True,
            range=(16.0, 90.0)),
        num("gender", "categorical", predictive=True,
            categories=("female", "male", "other")),
        # academic performance
        num("grade_mark_mean", "numeric", predictive=True, prescriptive_model=True,
            prescriptive_feedback=True, mutable=True, engineered=True, range=(0.0, 100.0)),
        num("grade_mark_max", "numeric", prescriptive_model=True, mutable=True,
            engineered=True, range=(0.0, 100.0)),
        num("grade_deviation_from_class", "numeric", predictive=True,
            prescriptive_model=True, mutable=True, range=(-4.0, 4.0)),
        num("papers_failed_year", "numeric", predictive=True, prescriptive_model=True,
            prescriptive_feedback=True, mutable=True, range=(0.0, 10.0)),
        num("online_assessments_passed", "numeric", prescriptive_model=True,
            mutable=True, engineered=True, range=(0.0, 60.0)),
        num("qualification_percent_completed", "numeric", prescriptive_model=True,
            prescriptive_feedback=True, mutable=True, engineered=True, range=(0.0, 100.0)),
        num("assignment_mark_mean", "numeric", predictive=True, prescriptive_model=True,
            prescriptive_feedback=True, mutable=True, engineered=True, range=(0.0, 100.0)),
        # learning behaviour
        num("papers_withdrawn_year", "numeric", predictive=True, prescriptive_model=True,
            prescriptive_feedback=True, mutable=True, range=(0.0, 10.0)),
        num("online_pages_viewed", "numeric", predictive=True, prescriptive_model=True,
            prescriptive_feedback=True, mutable=True, engineered=True, range=(0.0, 5000.0)),
        num("online_quizzes_taken", "numeric", predictive=True, prescriptive_model=True,
            prescriptive_feedback=True, mutable=True, engineered=True, range=(0.0, 200.0)),
        num("forum_posts_created", "numeric", predictive=True, prescriptive_model=True,
            prescriptive_feedback=True, mutable=True, engineered=True, range=(0.0, 300.0)),
        num("forum_posts_read", "numeric", predictive=True, prescriptive_model=True,
            prescriptive_feedback=True, mutable=True, engineered=True, range=(0.0, 2000.0)),
        num("ontime_submissions", "numeric", predictive=True, prescriptive_model=True,
            prescriptive_feedback=True, mutable=True, engineered=True, range=(0.0, 100.0)),
        # programme characteristics
        num("programme_title", "categorical", predictive=True,
            categories=("arts", "business", "science", "engineering", "health")),
        num("programme_credits_required", "numeric", predictive=True,
            prescriptive_model=True, prescriptive_feedback=True, mutable=True,
            range=(60.0, 480.0)),
    ])


@dataclass(frozen=True)
class NumericFieldConfig:
    """Distribution of one numeric feature.

    ``shift`` is added to the location for completing learners and
    ``per_year`` scales with the learner's year index (1-based).
    """

    mean: float
    sd: float
    shift: float = 0.0
    per_year: float = 0.0
    dist: str = "normal"  # "normal" | "poisson"
    integer: bool = False
    missing_rate: float = 0.0


@dataclass(frozen=True)
class CategoricalFieldConfig:
    probs: tuple[float, ...]
    probs_completed: tuple[float, ...] | None = None
    missing_rate: float = 0.0


@dataclass(frozen=True)
class GeneratorConfig:
    n_learners: int = 2000
    prevalence: float = 0.719  # completed fraction at row level
    years_completed: tuple[tuple[int, ...], tuple[float, ...]] = ((2, 3, 4), (0.3, 0.5, 0.2))
    years_non_completed: tuple[tuple[int, ...], tuple[float, ...]] = ((1, 2, 3), (0.5, 0.35, 0.15))
    start_years: tuple[int, ...] = (2018, 2019, 2020, 2021, 2022)
    numeric: dict = field(default_factory=dict)
    categorical: dict = field(default_factory=dict)
    version: str = "synth-v1"


def default_numeric_fields() -> dict[str, NumericFieldConfig]:
    return {
        "age": NumericFieldConfig(24.0, 7.0, integer=True),
        "grade_mark_mean": NumericFieldConfig(56.0, 12.0, shift=11.0, missing_rate=0.02),
        "grade_mark_max": NumericFieldConfig(70.0, 12.0, shift=9.0),
        "grade_deviation_from_class": NumericFieldConfig(-0.4, 1.0, shift=0.8),
        "papers_failed_year": NumericFieldConfig(1.8, 0.0, shift=-1.4, dist="poisson"),
        "online_assessments_passed": NumericFieldConfig(7.0, 3.0, shift=3.0, integer=True),
        "qualification_percent_completed": NumericFieldConfig(
            8.0, 9.0, shift=7.0, per_year=16.0, missing_rate=0.0),
        "assignment_mark_mean": NumericFieldConfig(58.0, 13.0, shift=9.0, missing_rate=0.03),
        "papers_withdrawn_year": NumericFieldConfig(1.0, 0.0, shift=-0.8, dist="poisson"),
        "online_pages_viewed": NumericFieldConfig(300.0, 130.0, shift=90.0, integer=True),
        "online_quizzes_taken": NumericFieldConfig(11.0, 5.0, shift=4.0, integer=True),
        "forum_posts_created": NumericFieldConfig(4.0, 3.0, shift=1.5, integer=True),
        "forum_posts_read": NumericFieldConfig(40.0, 25.0, shift=12.0, integer=True),
        "ontime_submissions": NumericFieldConfig(12.0, 4.0, shift=4.0, integer=True),
        "programme_credits_required": NumericFieldConfig(0.0, 0.0),  # handled separately
    }


def default_categorical_fields() -> dict[str, CategoricalFieldConfig]:
    return {
        "basis_for_admission": CategoricalFieldConfig(
            (0.35, 0.3, 0.15, 0.1, 0.1, 0.0), missing_rate=0.02),
        "has_previous_tertiary_study": CategoricalFieldConfig(
            (0.75, 0.25), probs_completed=(0.6, 0.4)),
        "highest_school_qualification": CategoricalFieldConfig(
            (0.1, 0.25, 0.4, 0.1, 0.15, 0.0), missing_rate=0.03),
        "full_time_status": CategoricalFieldConfig(
            (0.55, 0.45), probs_completed=(0.25, 0.75)),
        "study_mode": CategoricalFieldConfig(
            (0.4, 0.6), probs_completed=(0.5, 0.5)),
        "prior_activity": CategoricalFieldConfig(
            (0.35, 0.15, 0.3, 0.15, 0.05), probs_completed=(0.3, 0.3, 0.25, 0.1, 0.05)),
        "gender": CategoricalFieldConfig((0.52, 0.45, 0.03)),
        "programme_title": CategoricalFieldConfig((0.2, 0.25, 0.2, 0.15, 0.2)),
    }


def default_generator_config(**overrides) -> GeneratorConfig:
    cfg = GeneratorConfig(
        numeric=default_numeric_fields(), categorical=default_categorical_fields()
    )
    return replace(cfg, **overrides) if overrides else cfg


_CREDIT_CHOICES = (60.0, 120.0, 360.0, 480.0)
_CREDIT_PROBS = (0.1, 0.2, 0.5, 0.2)


def _assign_outcomes(rng, years_pos, years_neg, prevalence):
    """Pick the positive-learner count whose row-level completed fraction is
    closest to the target. Learners are considered in a seeded shuffle;
    prefix sums make every cut cheap to evaluate."""
    n = len(years_pos)
    order = rng.permutation(n)
    pos_prefix = np.concatenate([[0], np.cumsum(years_pos[order])])
    neg_suffix = np.concatenate([np.cumsum(years_neg[order][::-1])[::-1], [0]])
    totals = pos_prefix + neg_suffix
    fractions = np.divide(pos_prefix, totals, out=np.zeros(n + 1), where=totals > 0)
    m = int(np.argmin(np.abs(fractions - prevalence)))
    completed = np.zeros(n, dtype=bool)
    completed[order[:m]] = True
    return completed


def generate_synthetic(config: GeneratorConfig, seed: int) -> Dataset:
    """Draw a schema-conforming cohort with the configured class balance.

    The completed-row fraction lands within one learner's worth of rows of
    ``config.prevalence``. Deterministic for a fixed seed.
    """
    if not 0.0 < config.prevalence < 1.0:
        raise ConfigError(f"prevalence {config.prevalence} outside (0, 1)")
    if config.n_learners < 2:
        raise ConfigError("need at least 2 learners")
    schema = default_schema()
    rng = np.random.default_rng(seed)

    yp_vals, yp_probs = config.years_completed
    yn_vals, yn_probs = config.years_non_completed
    years_pos = rng.choice(yp_vals, size=config.n_learners, p=yp_probs)
    years_neg = rng.choice(yn_vals, size=config.n_learners, p=yn_probs)
    completed = _assign_outcomes(rng, years_pos, years_neg, config.prevalence)

    records: list[LearnerRecord] = []
    for i in range(config.n_learners):
        learner_id = f"L{i:05d}"
        done = bool(completed[i])
        n_years = int(years_pos[i] if done else years_neg[i])
        start = int(rng.choice(config.start_years))

        # per-learner constants
        constants: dict = {}
        for name, spec in config.categorical.items():
            cats = schema[name].categories
            probs = spec.probs_completed if (done and spec.probs_completed) else spec.probs
            label = cats[int(rng.choice(len(probs), p=probs))]
            if spec.missing_rate and rng.random() < spec.missing_rate:
                label = None
            constants[name] = label
        constants["programme_credits_required"] = float(
            rng.choice(_CREDIT_CHOICES, p=_CREDIT_PROBS)
        )
        age_cfg = config.numeric["age"]
        age = float(np.clip(rng.normal(age_cfg.mean, age_cfg.sd), *schema["age"].range))
        constants["age"] = float(int(round(age)))

        for year_idx in range(1, n_years + 1):
            values = dict(constants)
            for name, ncfg in config.numeric.items():
                if name in ("age", "programme_credits_required"):
                    continue
                loc = ncfg.mean + (ncfg.shift if done else 0.0) + ncfg.per_year * (year_idx - 1)
                if ncfg.dist == "poisson":
                    v = float(rng.poisson(max(loc, 0.0)))
                else:
                    v = float(rng.normal(loc, ncfg.sd))
                lo, hi = schema[name].range
                v = float(np.clip(v, lo, hi))
                if ncfg.integer:
                    v = float(int(round(v)))
                if ncfg.missing_rate and rng.random() < ncfg.missing_rate:
                    v = None
                values[name] = v
            records.append(
                LearnerRecord(
                    learner_id=learner_id,
                    academic_year=start + year_idx - 1,
                    raw_values=values,
                    outcome=1 if done else 0,
                )
            )

    return Dataset(schema, records, Provenance(source="synthetic", version=config.version))
