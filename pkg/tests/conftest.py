import warnings
from dataclasses import replace

import numpy as np
import pytest

from riskpath.boosting import Hyperparams
from riskpath.cohort import DegenerateCohortWarning
from riskpath.config import AppConfig, CfSettings, ShapSettings
from riskpath.counterfactual import SearchConfig
from riskpath.dataset import Dataset, FeatureSchema, FeatureSpec, LearnerRecord
from riskpath.pipeline import Pipeline
from riskpath.synth import default_generator_config, generate_synthetic

def small_app_config(n_learners=150) -> AppConfig:
    cfg = AppConfig()
    cfg.generator = replace(default_generator_config(), n_learners=n_learners)
    cfg.hyperparams = Hyperparams(n_estimators=40, max_depth=3, subsample=0.9)
    cfg.prescriptive_hyperparams = Hyperparams(n_estimators=40, max_depth=3)
    cfg.shap = ShapSettings(background_n=30, n_samples=128, global_rows=4)
    cfg.anchors = replace(cfg.anchors, n_samples=300)
    cfg.cf = CfSettings(search=SearchConfig(population=60, generations=25))
    return cfg


@pytest.fixture(scope="session")
def small_dataset():
    cfg = small_app_config()
    return generate_synthetic(cfg.generator, seed=7)


@pytest.fixture(scope="session")
def small_pipeline(small_dataset):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateCohortWarning)
        return Pipeline.build(small_dataset, small_app_config(), seed=0)


def tiny_schema(**kwargs) -> FeatureSchema:
    """Three numerics and one categorical, enough for most unit tests."""
    return FeatureSchema([
        FeatureSpec("grade", "numeric", predictive=True, range=(0.0, 100.0)),
        FeatureSpec("pages", "numeric", predictive=True, range=(0.0, 500.0)),
        FeatureSpec("papers_failed", "numeric", predictive=True, range=(0.0, 10.0)),
        FeatureSpec("mode", "categorical", predictive=True,
                    categories=("online", "on_campus", "mixed", "hybrid")),
    ])


def make_records(rows, outcomes=None, learner_prefix="s"):
    records = []
    for i, values in enumerate(rows):
        records.append(LearnerRecord(
            learner_id=f"{learner_prefix}{i:03d}",
            academic_year=2020,
            raw_values=dict(values),
            outcome=None if outcomes is None else int(outcomes[i]),
        ))
    return records


def tiny_dataset(n=40, seed=0) -> Dataset:
    rng = np.random.default_rng(seed)
    schema = tiny_schema()
    rows = []
    outcomes = []
    for _ in range(n):
        grade = float(np.round(rng.uniform(0, 100), 1))
        rows.append({
            "grade": grade,
            "pages": float(int(rng.uniform(0, 500))),
            "papers_failed": float(int(rng.integers(0, 5))),
            "mode": ["online", "on_campus", "mixed", "hybrid"][int(rng.integers(4))],
        })
        outcomes.append(1 if grade > 50 else 0)
    return Dataset(schema, make_records(rows, outcomes))
