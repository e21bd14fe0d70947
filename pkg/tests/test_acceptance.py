"""Acceptance suite: one test per release criterion, at pinned tolerances.

Each test prints a single pass line; a failed assertion is the fail line.
Heavier fixtures are shared per module so the suite stays inside its
runtime budgets.
"""
import itertools
import json
import re
import threading
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from conftest import make_records
from riskpath.anchors import AnchorConfig, find_anchor
from riskpath.boosting import Hyperparams, train_baseline, train_gbm
from riskpath.cohort import CohortStats, zscore, zscore_inverse
from riskpath.counterfactual import (
    CfConstraints,
    CfWeights,
    SearchConfig,
    generate_counterfactuals,
    score_candidate,
)
from riskpath.dataset import (
    Dataset,
    FeatureSchema,
    FeatureSpec,
    grouped_folds,
    impute_and_encode,
)
from riskpath.feedback import (
    DraftStore,
    TemplateValidationError,
    build_prompt_payload,
    denormalize_cf,
    render_offline,
    render_prompt,
    validate_response,
)
from riskpath.metrics import cross_validate
from riskpath.service import create_app
from riskpath.shapley import exact_shap, kernel_shap, simple_groups
from riskpath.synth import default_generator_config, default_schema, generate_synthetic
from riskpath.tuning import random_search_cv

from test_feedback import STUDENT_B_FACTS, student_b_cf, student_b_deltas, student_b_stats

DATA = Path(__file__).parent / "data"


def report(criterion: str, detail: str = ""):
    suffix = f" ({detail})" if detail else ""
    print(f"[PASS] {criterion}{suffix}")


@pytest.fixture(scope="module")
def baseline_cohort():
    cfg = default_generator_config(n_learners=3000, prevalence=0.719)
    d = generate_synthetic(cfg, seed=101)
    enc = impute_and_encode(d, d.schema.predictive_features())
    return enc


def test_c01_baseline_closed_forms(baseline_cohort):
    start = time.perf_counter()
    enc = baseline_cohort

    mode_agg, mode_folds = cross_validate(
        lambda X, y, s: train_baseline("mode", y, s),
        enc.X, enc.y, enc.groups, k=10, seed=1)
    strat_agg, _ = cross_validate(
        lambda X, y, s: train_baseline("stratified", y, s),
        enc.X, enc.y, enc.groups, k=10, seed=1)

    assert all(m.recall == 100.0 for m in mode_folds)
    assert mode_agg.recall == 100.0
    assert mode_agg.precision == pytest.approx(71.9, abs=1.5)
    assert mode_agg.f1 == pytest.approx(83.7, abs=1.0)
    assert strat_agg.f1 == pytest.approx(72.0, abs=1.5)
    assert strat_agg.auc == pytest.approx(50.0, abs=2.0)

    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    report("C1 baseline closed forms",
           f"mode F1 {mode_agg.f1:.1f}, stratified F1 {strat_agg.f1:.1f}, "
           f"{elapsed:.1f}s")


def test_c02_model_lift_over_mode_baseline():
    start = time.perf_counter()
    cfg = default_generator_config(n_learners=500, prevalence=0.719)
    d = generate_synthetic(cfg, seed=202)
    enc = impute_and_encode(d, d.schema.predictive_features())

    space = {
        "n_estimators": [30, 60],
        "max_depth": [2, 3],
        "learning_rate": [0.1, 0.3],
        "subsample": [0.85, 1.0],
    }
    result = random_search_cv(enc.X, enc.y, enc.groups, space,
                              n_iter=4, k_tune=5, k_final=10, seed=7)
    mode_agg, _ = cross_validate(
        lambda X, y, s: train_baseline("mode", y, s),
        enc.X, enc.y, enc.groups, k=10, seed=7)

    lift = result.metrics.f1 - mode_agg.f1
    assert lift >= 5.0
    elapsed = time.perf_counter() - start
    assert elapsed < 300.0
    report("C2 model lift", f"tuned F1 {result.metrics.f1:.1f} vs mode "
           f"{mode_agg.f1:.1f}, lift {lift:.1f}, {elapsed:.1f}s")


def test_c03_leakage_guard_hundred_seeds():
    cfg = default_generator_config(n_learners=220)
    d = generate_synthetic(cfg, seed=303)
    groups = [rec.learner_id for rec in d.records]
    violations = 0
    for seed in range(100):
        for train_idx, test_idx in grouped_folds(groups, k=10, seed=seed):
            train_ids = {groups[i] for i in train_idx}
            test_ids = {groups[i] for i in test_idx}
            violations += len(train_ids & test_ids)
    assert violations == 0
    report("C3 leakage guard", "100 seeded grouped 10-fold runs, 0 overlaps")


@pytest.fixture(scope="module")
def ten_feature_model():
    cfg = default_generator_config(n_learners=260)
    d = generate_synthetic(cfg, seed=404)
    numeric = [f.name for f in d.schema if f.is_numeric][:10]
    enc = impute_and_encode(d, numeric)
    assert enc.X.shape[1] == 10
    folds = grouped_folds(enc.groups, k=10, seed=0)
    train_idx, test_idx = folds[0]
    model = train_gbm(enc.X[train_idx], enc.y[train_idx],
                      Hyperparams(n_estimators=40, max_depth=3), seed=0,
                      feature_names=enc.columns)
    return model, enc.X[train_idx], enc.X[test_idx][:20]


def test_c04_shap_local_accuracy(ten_feature_model):
    start = time.perf_counter()
    model, X_train, X_test = ten_feature_model
    rng = np.random.default_rng(0)
    background = X_train[rng.choice(len(X_train), size=30, replace=False)]
    groups = simple_groups(model.feature_names)

    worst_gap = 0.0
    worst_kernel = 0.0
    for i, row in enumerate(X_test):
        exact = exact_shap(model.predict_margin, row, background, groups)
        worst_gap = max(worst_gap, exact.additivity_gap())
        kernel = kernel_shap(model.predict_margin, row, background, groups,
                             n_samples=(1 << 10), seed=i)
        scale = max(abs(v) for v in exact.phi.values())
        deviation = max(abs(kernel.phi[k] - exact.phi[k]) for k in exact.phi)
        worst_kernel = max(worst_kernel, deviation / max(scale, 1e-12))

    assert worst_gap <= 1e-6
    assert worst_kernel <= 0.01
    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    report("C4 attribution local accuracy",
           f"max additivity gap {worst_gap:.2e}, kernel deviation "
           f"{100 * worst_kernel:.4f}% of max pull, {elapsed:.1f}s")


def test_c05_shap_axioms():
    from riskpath.boosting import TreeEnsemble, TreeNode

    # dummy axiom: a never-split feature draws zero attribution
    tree = TreeNode(column=0, threshold=0.0,
                    left=TreeNode(value=-1.0), right=TreeNode(value=1.0))
    model = TreeEnsemble(trees=[tree], learning_rate=1.0, base_score=0.0,
                         feature_names=["a", "b", "c"])
    rng = np.random.default_rng(1)
    attr = exact_shap(model.predict_margin, rng.normal(size=3),
                      rng.normal(size=(8, 3)), simple_groups(["a", "b", "c"]))
    assert abs(attr.phi["b"]) <= 1e-9
    assert abs(attr.phi["c"]) <= 1e-9

    # symmetry axiom: exchangeable features at equal values draw equal pull
    predict = lambda X: X[:, 0] * X[:, 1] + 0.5 * (X[:, 0] + X[:, 1])
    sym = exact_shap(predict, np.array([1.0, 1.0]), np.zeros((1, 2)))
    assert abs(sym.phi["x0"] - sym.phi["x1"]) <= 1e-9
    report("C5 attribution axioms", "dummy = 0 and symmetry to 1e-9")


def _anchor_toy():
    schema = FeatureSchema([
        FeatureSpec("a", "numeric", range=(0.0, 2.0)),
        FeatureSpec("b", "numeric", range=(0.0, 2.0)),
        FeatureSpec("c", "categorical", categories=("x", "y")),
        FeatureSpec("d", "numeric", range=(0.0, 1.0)),
    ])
    rows = [
        {"a": a, "b": b, "c": c, "d": dd}
        for a, b, c, dd in itertools.product(
            [0.0, 1.0, 2.0], [0.0, 1.0, 2.0], ["x", "y"], [0.0, 1.0])
    ]
    return Dataset(schema, make_records(rows, [1] * len(rows)))


def _anchor_classify(rows):
    return np.array([0 if (r["a"] <= 1.0 and r["c"] == "x") else 1 for r in rows])


def _true_precision(rule, dataset, classify, row):
    from collections import Counter

    names = dataset.schema.names()
    rows = dataset.value_rows()
    pools = {}
    for name in names:
        counts = Counter(r[name] for r in rows)
        preds = [p for p in rule.predicates if p.feature == name]
        if preds:
            counts = Counter({v: c for v, c in counts.items()
                              if all(p.holds({name: v}) for p in preds)})
            if not counts:
                counts = Counter({row[name]: 1})
        total = sum(counts.values())
        pools[name] = [(v, c / total)
                       for v, c in sorted(counts.items(), key=lambda kv: str(kv[0]))]
    total_w = hit_w = 0.0
    for combo in itertools.product(*(pools[n] for n in names)):
        values = {n: vw[0] for n, vw in zip(names, combo)}
        w = float(np.prod([vw[1] for vw in combo]))
        total_w += w
        hit_w += w * (int(classify([values])[0]) == rule.predicted_class)
    return hit_w / total_w


def test_c06_anchor_soundness_two_hundred_seeds():
    d = _anchor_toy()
    toy_rows = [r for r in d.value_rows() if _anchor_classify([r])[0] == 0]
    config = AnchorConfig(n_samples=300)
    accepted = 0
    for seed in range(200):
        row = toy_rows[seed % len(toy_rows)]
        rule = find_anchor(_anchor_classify, row, d, tau=0.95, seed=seed,
                           config=config)
        assert rule.holds(row), f"seed {seed}: row escapes its own anchor"
        if rule.anchored:
            accepted += 1
            assert _true_precision(rule, d, _anchor_classify, row) >= 0.95
    assert accepted > 0
    report("C6 anchor soundness",
           f"200 seeded cases anchored their rows; {accepted} accepted rules "
           "all meet true precision 0.95")


def _binary_cf_case(seed):
    """Three actionable binary switches plus one frozen bystander."""
    schema = FeatureSchema([
        FeatureSpec(name, "categorical", prescriptive_model=True,
                    prescriptive_feedback=True, mutable=True,
                    categories=("off", "on"))
        for name in ("b0", "b1", "b2")
    ] + [FeatureSpec("locked", "categorical", prescriptive_model=True,
                     categories=("off", "on"))])
    rng = np.random.default_rng(seed)
    w = rng.normal(size=4)
    bias = -abs(rng.normal()) - 0.1
    names = ("b0", "b1", "b2", "locked")

    def predict(rows):
        scores = [
            bias + sum(w[i] * (r[name] == "on") for i, name in enumerate(names))
            for r in rows
        ]
        return 1.0 / (1.0 + np.exp(-3 * np.asarray(scores)))

    return schema, predict


def test_c07_counterfactual_contract():
    weights = CfWeights()
    config = SearchConfig(population=60, generations=25)
    row = {"b0": "off", "b1": "off", "b2": "off", "locked": "off"}
    matches = attempts = 0
    flip_checks = frozen_checks = sparsity_checks = 0
    seed = 0
    while attempts < 100:
        seed += 1
        assert seed < 600, "not enough eligible random models"
        schema, predict = _binary_cf_case(seed)
        if float(predict([row])[0]) >= 0.5:
            continue
        c = CfConstraints(actionable=frozenset({"b0", "b1", "b2"}),
                          frozen=frozenset({"locked"}), max_changed=3)

        valid_losses = {}
        for combo in itertools.product(["off", "on"], repeat=3):
            candidate = dict(row, b0=combo[0], b1=combo[1], b2=combo[2])
            if candidate == row:
                continue
            scores = score_candidate(predict, row, candidate, schema, c, weights)
            if scores.valid:
                deltas = tuple(sorted(
                    (k, v) for k, v in candidate.items() if v != row[k]))
                valid_losses[deltas] = scores.total(weights)
        if not valid_losses:
            continue
        attempts += 1
        best = min(valid_losses.values())
        argmin = {dl for dl, loss in valid_losses.items() if loss <= best + 1e-12}

        cfs = generate_counterfactuals(predict, row, k=3, c=c, schema=schema,
                                       weights=weights, seed=seed, config=config)
        for cf in cfs:
            if cf.valid:
                flip_checks += 1
                assert float(predict([cf.apply_to(row)])[0]) >= 0.5
            frozen_checks += 1
            assert "locked" not in cf.deltas
            sparsity_checks += 1
            assert cf.sparsity <= 3

        got = tuple(sorted((k, to) for k, (_, to) in cfs[0].deltas.items()))
        matches += got in argmin

    assert matches >= 95
    report("C7 counterfactual contract",
           f"{flip_checks} flips re-checked, 0 frozen edits in {frozen_checks}, "
           f"sparsity bounded in {sparsity_checks}, "
           f"{matches}/100 matched exhaustive minimal loss")


def test_c08_round_trip_fidelity():
    rng = np.random.default_rng(8)
    stats = CohortStats("c", "grade_mark_mean", mu=61.2, sigma=7.5, n=40)
    xs = rng.uniform(-5000, 5000, size=10_000)
    back = np.array([zscore_inverse(zscore(x, stats), stats) for x in xs])
    rel = np.abs(back - xs) / np.maximum(np.abs(xs), 1e-12)
    assert rel.max() <= 1e-9

    deltas = {d.feature: d for d in
              denormalize_cf(student_b_cf(), student_b_stats(), default_schema())}
    qual = deltas["qualification_percent_completed"]
    assert qual.from_text() == "4.1%"
    assert qual.to_text() == "8.2%"
    report("C8 round-trip fidelity",
           f"max relative error {rel.max():.2e}; 4.1% to 8.2% reproduced")


def test_c09_feedback_determinism_and_validation():
    status = build_prompt_payload("status", STUDENT_B_FACTS, [])
    remedial = build_prompt_payload("remedial", STUDENT_B_FACTS, student_b_deltas())

    assert render_offline(status).encode() == render_offline(status).encode()
    assert render_offline(remedial).encode() == render_offline(remedial).encode()
    assert render_prompt(status) == (DATA / "status_prompt_student_b.txt").read_text()
    assert render_prompt(remedial) == (DATA / "remedial_prompt_student_b.txt").read_text()

    faithful = remedial.response_template
    for key, value in remedial.data.items():
        faithful = faithful.replace("{{%s}}" % key, str(value))
    adversarial = [
        faithful + "\nAlso dedicate 37.5 hours weekly.",
        faithful + "\nYour odds improve by 250 percent.",
        faithful.replace("8.2%", "82%"),
    ]
    rejected = 0
    for text in adversarial:
        try:
            validate_response(text, remedial)
        except TemplateValidationError:
            rejected += 1
    assert rejected == 3
    report("C9 feedback determinism", "offline byte-stable, goldens stable, "
           "3/3 adversarial responses rejected")


def test_c10_service_determinism_and_approval_safety(small_pipeline):
    store = DraftStore()
    app = create_app(small_pipeline, draft_store=store)
    client = TestClient(app)
    risky = small_pipeline.student_summaries()[0]["learner_id"]

    payload = {"seed": 12, "k": 2, "max_changed": 2}
    first = client.post(f"/students/{risky}/whatif", json=payload)
    second = client.post(f"/students/{risky}/whatif", json=payload)
    assert first.status_code == 200
    assert first.content == second.content

    single_success = 0
    for trial in range(100):
        draft = store.create("s", 1, "status", "remedial", "offline-template")
        codes = []
        barrier = threading.Barrier(2)

        def attempt():
            barrier.wait()
            with TestClient(app) as c:
                codes.append(c.post(
                    f"/feedback/{draft.draft_id}/approve", json={}).status_code)

        threads = [threading.Thread(target=attempt) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        single_success += sorted(codes) == [200, 409]
    assert single_success == 100
    report("C10 service determinism and approval safety",
           "identical what-if bytes; 100/100 double approvals had one winner")
