"""End-to-end wiring: prepare, train, explain, prescribe for one cohort.

The pipeline owns the raw and engineered datasets, cohort statistics and the
two trained models. The risk model consumes the predictive feature set; the
actionability model is retrained on the prescriptive feature set and is the
one interrogated by the counterfactual search.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import anchors as anchors_mod
from . import counterfactual as cf_mod
from . import shapley
from .boosting import TreeEnsemble, load_model, save_model, train_gbm
from .cohort import (
    StatsStore,
    default_cohort_key,
    engineer,
    fit_cohort_stats,
)
from .config import AppConfig
from .dataset import (
    Dataset,
    EncodingLayout,
    FeatureSchema,
    LearnerRecord,
    MISSING_LABEL,
    impute_and_encode,
    load_dataset,
    write_dataset,
)
from .feedback import (
    LlmConfig,
    RawDelta,
    build_prompt_payload,
    default_allowed_fields,
    denormalize_cf,
    format_raw,
    generate_feedback_text,
    render_prompt,
)

STATUS_FACT_FEATURES = (
    "grade_mark_mean",
    "full_time_status",
    "study_mode",
    "qualification_percent_completed",
    "programme_credits_required",
)


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:4], "big")


def imputed_record(values: dict, schema: FeatureSchema) -> dict:
    """Concrete model-space row: missing numerics to 0, missing categoricals
    to the dedicated missing label."""
    out = {}
    for spec in schema:
        v = values.get(spec.name)
        if v is None:
            out[spec.name] = 0.0 if spec.is_numeric else MISSING_LABEL
        else:
            out[spec.name] = v
    return out


@dataclass
class Pipeline:
    config: AppConfig
    schema: FeatureSchema
    raw: Dataset
    engineered: Dataset
    stats: StatsStore
    predictive_layout: EncodingLayout
    predictive_model: TreeEnsemble
    prescriptive_layout: EncodingLayout
    prescriptive_model: TreeEnsemble
    model_version: str = "m1"

    # ---------------------------------------------------------------- build
    @classmethod
    def build(cls, raw: Dataset, config: AppConfig, seed: int = 0) -> "Pipeline":
        stats = fit_cohort_stats(raw)
        engineered = engineer(raw, stats)
        pred = impute_and_encode(engineered, raw.schema.predictive_features())
        presc = impute_and_encode(engineered, raw.schema.prescriptive_features())
        predictive_model = train_gbm(
            pred.X, pred.y, config.hyperparams, seed, feature_names=pred.columns
        )
        prescriptive_model = train_gbm(
            presc.X, presc.y, config.prescriptive_hyperparams, seed + 1,
            feature_names=presc.columns,
        )
        return cls(
            config=config,
            schema=raw.schema,
            raw=raw,
            engineered=engineered,
            stats=stats,
            predictive_layout=pred.layout,
            predictive_model=predictive_model,
            prescriptive_layout=presc.layout,
            prescriptive_model=prescriptive_model,
            model_version=f"m-{seed}",
        )

    # ------------------------------------------------------------- lookups
    def latest_record(self, learner_id: str, engineered: bool = True) -> LearnerRecord:
        source = self.engineered if engineered else self.raw
        candidates = [r for r in source.records if r.learner_id == learner_id]
        if not candidates:
            raise KeyError(f"unknown learner {learner_id!r}")
        return max(candidates, key=lambda r: r.academic_year)

    def learner_ids(self) -> list[str]:
        return self.raw.learner_ids()

    def cohort_key_for(self, learner_id: str) -> str:
        return default_cohort_key(self.latest_record(learner_id, engineered=False))

    # ----------------------------------------------------------- predicting
    def completion_probability(self, learner_id: str) -> float:
        rec = self.latest_record(learner_id)
        x = self.predictive_layout.encode_row(rec.raw_values)
        return self.predictive_model.predict_proba_row(x)

    def student_summaries(self) -> list[dict]:
        rows = []
        for learner_id in self.learner_ids():
            rec = self.latest_record(learner_id, engineered=False)
            p = self.completion_probability(learner_id)
            rows.append({
                "learner_id": learner_id,
                "academic_year": rec.academic_year,
                "completion_probability": p,
                "risk_probability": 1.0 - p,
            })
        rows.sort(key=lambda r: -r["risk_probability"])
        return rows

    # ----------------------------------------------------------- explaining
    def _predictive_margin_fn(self):
        return self.predictive_model.predict_margin

    def _background(self, seed: int) -> np.ndarray:
        enc = impute_and_encode(self.engineered, self.schema.predictive_features())
        return shapley.background_sample(
            enc.X, enc.y, n=self.config.shap.background_n, seed=seed
        )

    def _display_values(self, learner_id: str) -> dict:
        raw_rec = self.latest_record(learner_id, engineered=False)
        out = {}
        for spec in self.schema:
            v = raw_rec.raw_values.get(spec.name)
            out[spec.name] = "" if v is None else format_raw(spec.name, v)
        return out

    def explain_local(self, learner_id: str) -> dict:
        """Force-plot attribution plus the anchor rule for one learner."""
        rec = self.latest_record(learner_id)
        x = self.predictive_layout.encode_row(rec.raw_values)
        seed = _stable_seed(self.model_version, learner_id)
        attr = shapley.kernel_shap(
            self._predictive_margin_fn(),
            x,
            self._background(seed),
            groups=self.predictive_layout.feature_groups(),
            n_samples=self.config.shap.n_samples,
            seed=seed,
        )
        attr.feature_values = {
            k: v for k, v in self._display_values(learner_id).items() if k in attr.phi
        }
        force_plot = shapley.force_plot_export(attr)

        def classify(rows: list[dict]) -> np.ndarray:
            X = self.predictive_layout.encode_rows(
                [imputed_record(r, self.schema) for r in rows]
            )
            return (self.predictive_model.predict_margin(X) >= 0).astype(int)

        anchor = anchors_mod.find_anchor(
            classify,
            imputed_record(rec.raw_values, self.schema),
            self.engineered,
            tau=self.config.anchors.tau,
            seed=seed,
            config=self.config.anchors,
        )
        anchor = self._with_raw_displays(anchor, learner_id)
        return {
            "learner_id": learner_id,
            "completion_probability": self.completion_probability(learner_id),
            "force_plot": force_plot,
            "anchor": {
                "predicates": anchor.render_lines(),
                "precision": anchor.precision,
                "precision_lb": anchor.precision_lb,
                "coverage": anchor.coverage,
                "predicted_class": anchor.predicted_class,
                "anchored": anchor.anchored,
            },
        }

    def _with_raw_displays(self, anchor: anchors_mod.AnchorRule,
                           learner_id: str) -> anchors_mod.AnchorRule:
        """Attach raw-unit renderings to thresholds on standardized features."""
        cohort = self.cohort_key_for(learner_id)
        predicates = []
        for p in anchor.predicates:
            spec = self.schema[p.feature]
            if spec.is_numeric and spec.engineered and (cohort, p.feature) in self.stats:
                from .cohort import round_raw, zscore_inverse

                raw = round_raw(p.feature, zscore_inverse(float(p.value), self.stats.get(cohort, p.feature)))
                predicates.append(replace(p, display=format_raw(p.feature, raw)))
            elif spec.is_numeric:
                predicates.append(replace(p, display=format_raw(p.feature, round(float(p.value), 2))))
            else:
                predicates.append(p)
        return replace(anchor, predicates=tuple(predicates))

    def explain_global(self, seed: int = 0) -> dict:
        """Mean-impact ranking over a sample of rows, with per-row detail."""
        enc = impute_and_encode(self.engineered, self.schema.predictive_features())
        rng = np.random.default_rng(seed)
        n_rows = min(self.config.shap.global_rows, enc.X.shape[0])
        idx = np.sort(rng.choice(enc.X.shape[0], size=n_rows, replace=False))
        background = shapley.background_sample(
            enc.X, enc.y, n=self.config.shap.background_n, seed=seed
        )
        attrs = []
        for j, i in enumerate(idx):
            attrs.append(shapley.kernel_shap(
                self._predictive_margin_fn(), enc.X[i], background,
                groups=enc.layout.feature_groups(),
                n_samples=self.config.shap.n_samples,
                seed=_stable_seed(seed, int(i)),
            ))
        ranking = shapley.global_importance(attrs)
        rows = []
        for j, i in enumerate(idx):
            rec = self.engineered.records[int(i)]
            rows.append({
                "row": int(i),
                "learner_id": rec.learner_id,
                "phi": attrs[j].phi,
                "values": {
                    name: rec.raw_values.get(name)
                    for name in self.schema.predictive_features()
                },
            })
        return {
            "importance": [{"feature": f, "mean_abs_phi": v} for f, v in ranking],
            "rows": rows,
        }

    # ---------------------------------------------------------- prescribing
    def prescriptive_prob_fn(self):
        def predict(rows: list[dict]) -> np.ndarray:
            X = self.prescriptive_layout.encode_rows(
                [imputed_record(r, self.schema) for r in rows]
            )
            return self.prescriptive_model.predict_proba(X)
        return predict

    def default_constraints(self, max_changed: int | None = None) -> cf_mod.CfConstraints:
        actionable = frozenset(self.schema.feedback_features())
        frozen = frozenset(
            set(self.schema.prescriptive_features()) - set(self.schema.feedback_features())
        )
        grids = {}
        if "programme_credits_required" in self.schema:
            grids["programme_credits_required"] = (60.0, 120.0, 360.0, 480.0)
        return cf_mod.CfConstraints(
            actionable=actionable,
            frozen=frozen,
            max_changed=max_changed or self.config.cf.max_changed,
            grids=grids,
        )

    def counterfactuals(
        self,
        learner_id: str,
        k: int | None = None,
        constraints: cf_mod.CfConstraints | None = None,
        seed: int = 0,
    ) -> dict:
        """Search pathways for one learner and render them for advisors."""
        rec = self.latest_record(learner_id)
        row = imputed_record(rec.raw_values, self.schema)
        row = {n: row[n] for n in self.schema.prescriptive_features()}
        constraints = constraints or self.default_constraints()
        k = k or self.config.cf.k
        cohort = self.cohort_key_for(learner_id)
        cfs = cf_mod.generate_counterfactuals(
            self.prescriptive_prob_fn(),
            row,
            k=k,
            c=constraints,
            schema=self.schema,
            weights=self.config.cf.weights,
            seed=seed,
            config=self.config.cf.search,
            cohort_key=cohort,
        )
        cfs = cf_mod.filter_feasible(cfs, constraints, self.schema)
        raw_deltas = [denormalize_cf(cf, self.stats, self.schema) for cf in cfs]
        return {
            "learner_id": learner_id,
            "seed": seed,
            "cohort_key": cohort,
            "pathways": [
                {
                    "index": i + 1,
                    "deltas": {
                        name: {"from": fr, "to": to}
                        for name, (fr, to) in cf.deltas.items()
                    },
                    "predicted_completion_probability": cf.predicted_prob_after,
                    "valid": cf.valid,
                    "sparsity": cf.sparsity,
                    "proximity": cf.proximity,
                    "raw_deltas": [
                        {
                            "feature": d.feature,
                            "display": d.display,
                            "from": d.from_text(),
                            "to": d.to_text(),
                            "direction": d.direction,
                        }
                        for d in raw_deltas[i]
                    ],
                }
                for i, cf in enumerate(cfs)
            ],
            "table": cf_mod.export_cf_table(row, cfs, self.schema),
        }

    def _raw_deltas_from_doc(self, pathway: dict) -> list[RawDelta]:
        deltas = []
        for rd in pathway["raw_deltas"]:
            deltas.append(RawDelta(
                feature=rd["feature"],
                display=rd["display"],
                from_raw=rd["from"],
                to_raw=rd["to"],
                unit="",
                direction=rd["direction"],
            ))
        return deltas

    # ------------------------------------------------------------- feedback
    def student_facts(self, learner_id: str) -> dict:
        raw_rec = self.latest_record(learner_id, engineered=False)
        facts = {"learner_ref": learner_id, "academic_year": raw_rec.academic_year}
        for name in STATUS_FACT_FEATURES:
            if name in self.schema:
                v = raw_rec.raw_values.get(name)
                if v is not None:
                    facts[name] = v
        return facts

    def feedback_payloads(self, learner_id: str, raw_deltas: list[RawDelta]) -> dict:
        allowed = default_allowed_fields(self.schema)
        facts = self.student_facts(learner_id)
        status = build_prompt_payload("status", facts, [], allowed_fields=allowed)
        remedial = build_prompt_payload("remedial", facts, raw_deltas, allowed_fields=allowed)
        return {"status": status, "remedial": remedial}

    def feedback_texts(self, learner_id: str, raw_deltas: list[RawDelta],
                       llm: LlmConfig | None = None) -> dict:
        llm = llm or self.config.llm
        payloads = self.feedback_payloads(learner_id, raw_deltas)
        status_text, provenance = generate_feedback_text(payloads["status"], llm)
        remedial_text, _ = generate_feedback_text(payloads["remedial"], llm)
        return {
            "status_prompt": render_prompt(payloads["status"]),
            "remedial_prompt": render_prompt(payloads["remedial"]),
            "status_text": status_text,
            "remedial_text": remedial_text,
            "provenance": provenance,
        }

    # ---------------------------------------------------------- persistence
    def save(self, run_dir: str | Path) -> None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        self.schema.to_manifest(run_dir / "schema.json")
        write_dataset(self.raw, run_dir / "dataset.csv")
        self.stats.save(run_dir / "stats.csv")
        save_model(self.predictive_model, run_dir / "model.json")
        save_model(self.prescriptive_model, run_dir / "prescriptive_model.json")
        meta = {
            "model_version": self.model_version,
            "predictive_features": self.predictive_layout.features,
            "prescriptive_features": self.prescriptive_layout.features,
        }
        (run_dir / "pipeline.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, run_dir: str | Path, config: AppConfig) -> "Pipeline":
        run_dir = Path(run_dir)
        raw = load_dataset(run_dir / "dataset.csv", run_dir / "schema.json")
        stats = StatsStore.load(run_dir / "stats.csv")
        engineered = engineer(raw, stats)
        meta = json.loads((run_dir / "pipeline.json").read_text())
        predictive_layout = EncodingLayout(raw.schema, meta["predictive_features"])
        prescriptive_layout = EncodingLayout(raw.schema, meta["prescriptive_features"])
        return cls(
            config=config,
            schema=raw.schema,
            raw=raw,
            engineered=engineered,
            stats=stats,
            predictive_layout=predictive_layout,
            predictive_model=load_model(run_dir / "model.json"),
            prescriptive_layout=prescriptive_layout,
            prescriptive_model=load_model(run_dir / "prescriptive_model.json"),
            model_version=meta["model_version"],
        )
