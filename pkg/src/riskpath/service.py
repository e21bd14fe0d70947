"""Advisor-facing HTTP API over a loaded pipeline snapshot.

Read endpoints are side-effect free and deterministic for a fixed model
version; what-if requests are stateless and reproducible from their body
plus seed. Draft approval uses compare-and-set, so concurrent double
approvals resolve to exactly one success.
"""
from __future__ import annotations

import os
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request
from pydantic import BaseModel, Field

from .counterfactual import CfConstraints, ConstraintViolation, NoFeasiblePathway
from .feedback import (
    DraftConflictError,
    DraftNotFoundError,
    DraftStore,
    generate_feedback_text,
)
from .pipeline import Pipeline


class WhatIfBody(BaseModel):
    """Constraint overrides may only tighten the defaults."""

    ranges: dict[str, tuple[float, float]] | None = None
    frozen: list[str] | None = None
    max_changed: int | None = Field(default=None, ge=1)
    k: int | None = Field(default=None, ge=1, le=10)
    seed: int = 0


class DraftBody(BaseModel):
    pf_index: int = Field(ge=1)
    seed: int = 0
    ranges: dict[str, tuple[float, float]] | None = None
    frozen: list[str] | None = None
    max_changed: int | None = Field(default=None, ge=1)
    k: int | None = Field(default=None, ge=1, le=10)


class ApproveBody(BaseModel):
    note: str = ""


def _merge_constraints(pipeline: Pipeline, body) -> CfConstraints:
    base = pipeline.default_constraints()
    actionable = set(base.actionable)
    frozen = set(base.frozen)
    if body.frozen:
        unknown = set(body.frozen) - set(pipeline.schema.names())
        if unknown:
            raise HTTPException(422, f"unknown features in frozen set: {sorted(unknown)}")
        frozen |= set(body.frozen)
        actionable -= set(body.frozen)
    ranges = dict(base.ranges)
    if body.ranges:
        for name, (lo, hi) in body.ranges.items():
            if name not in pipeline.schema:
                raise HTTPException(422, f"unknown feature {name!r} in ranges")
            if lo > hi:
                raise HTTPException(422, f"{name}: range lo > hi")
            spec = pipeline.schema[name]
            base_lo, base_hi = (-3.0, 3.0) if spec.engineered else (
                spec.range if spec.range else (-3.0, 3.0)
            )
            if name in base.ranges:
                base_lo, base_hi = base.ranges[name]
            if lo < base_lo or hi > base_hi:
                raise HTTPException(
                    422,
                    f"{name}: override [{lo}, {hi}] widens the allowed "
                    f"[{base_lo}, {base_hi}]; overrides may only tighten",
                )
            ranges[name] = (lo, hi)
    max_changed = base.max_changed
    if body.max_changed is not None:
        if body.max_changed > base.max_changed:
            raise HTTPException(
                422,
                f"max_changed {body.max_changed} exceeds the configured "
                f"{base.max_changed}; overrides may only tighten",
            )
        max_changed = body.max_changed
    if not actionable:
        raise HTTPException(422, "no feasible pathway: every feature is frozen")
    try:
        return CfConstraints(
            actionable=frozenset(actionable),
            frozen=frozenset(frozen),
            ranges=ranges,
            max_changed=max_changed,
            monotone=dict(base.monotone),
            grids=dict(base.grids),
        )
    except ConstraintViolation as exc:
        raise HTTPException(422, str(exc)) from exc


def _run_whatif(pipeline: Pipeline, learner_id: str, body) -> dict:
    if learner_id not in set(pipeline.learner_ids()):
        raise HTTPException(404, f"unknown student {learner_id!r}")
    constraints = _merge_constraints(pipeline, body)
    try:
        return pipeline.counterfactuals(
            learner_id,
            k=body.k,
            constraints=constraints,
            seed=body.seed,
        )
    except NoFeasiblePathway as exc:
        raise HTTPException(422, f"no feasible pathway: {exc}") from exc
    except ValueError as exc:
        raise HTTPException(422, str(exc)) from exc


def create_app(
    pipeline: Pipeline,
    draft_store: DraftStore | None = None,
    token: str | None = None,
) -> FastAPI:
    app = FastAPI(title="learner risk advisor API")
    store = draft_store or DraftStore()
    explanation_cache: dict[str, dict] = {}

    async def require_token(request: Request):
        if token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(401, "missing or invalid bearer token")

    guarded = [Depends(require_token)]

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "model_version": pipeline.model_version}

    @app.get("/students", dependencies=guarded)
    def students():
        return {"students": pipeline.student_summaries()}

    @app.get("/students/{learner_id}/prediction", dependencies=guarded)
    def prediction(learner_id: str):
        if learner_id not in set(pipeline.learner_ids()):
            raise HTTPException(404, f"unknown student {learner_id!r}")
        p = pipeline.completion_probability(learner_id)
        return {
            "learner_id": learner_id,
            "completion_probability": p,
            "risk_probability": 1.0 - p,
            "predicted_outcome": "completed" if p >= 0.5 else "non_completed",
        }

    @app.get("/students/{learner_id}/explanation", dependencies=guarded)
    def explanation(learner_id: str):
        if learner_id not in set(pipeline.learner_ids()):
            raise HTTPException(404, f"unknown student {learner_id!r}")
        if learner_id not in explanation_cache:
            explanation_cache[learner_id] = pipeline.explain_local(learner_id)
        return explanation_cache[learner_id]

    @app.post("/students/{learner_id}/whatif", dependencies=guarded)
    def whatif(learner_id: str, body: WhatIfBody):
        return _run_whatif(pipeline, learner_id, body)

    @app.post("/students/{learner_id}/feedback/draft", dependencies=guarded)
    def draft_feedback(learner_id: str, body: DraftBody):
        doc = _run_whatif(pipeline, learner_id, body)
        pathways = doc["pathways"]
        if body.pf_index > len(pathways):
            raise HTTPException(422, f"pathway {body.pf_index} not in 1..{len(pathways)}")
        pathway = pathways[body.pf_index - 1]
        raw_deltas = pipeline._raw_deltas_from_doc(pathway)
        payloads = pipeline.feedback_payloads(learner_id, raw_deltas)
        status_text, provenance = generate_feedback_text(payloads["status"], pipeline.config.llm)
        remedial_text, _ = generate_feedback_text(payloads["remedial"], pipeline.config.llm)
        draft = store.create(
            student_ref=learner_id,
            pf_index=body.pf_index,
            status_text=status_text,
            remedial_text=remedial_text,
            provenance=provenance,
        )
        return draft.as_dict()

    @app.post("/feedback/{draft_id}/approve", dependencies=guarded)
    def approve(draft_id: str, body: ApproveBody):
        try:
            return store.approve(draft_id, body.note).as_dict()
        except DraftNotFoundError:
            raise HTTPException(404, f"unknown draft {draft_id!r}") from None
        except DraftConflictError as exc:
            raise HTTPException(409, str(exc)) from exc

    @app.get("/feedback/{draft_id}", dependencies=guarded)
    def get_draft(draft_id: str):
        try:
            return store.get(draft_id).as_dict()
        except DraftNotFoundError:
            raise HTTPException(404, f"unknown draft {draft_id!r}") from None

    return app


def app_from_env() -> FastAPI:
    """Uvicorn factory: RISKPATH_RUN_DIR points at a saved run directory."""
    from .config import load_config

    run_dir = Path(os.environ.get("RISKPATH_RUN_DIR", "run"))
    config_path = os.environ.get("RISKPATH_CONFIG") or None
    pipeline = Pipeline.load(run_dir, load_config(config_path))
    token = os.environ.get("RISKPATH_API_TOKEN") or None
    return create_app(pipeline, token=token)
