"""Remedial feedback assembly: raw-unit conversion, prompt payloads and text.

Pathway deltas come out of the search in model space, so they are first
mapped back into raw units (standardized features through the cohort
inverse, categories through their labels). Each feedback consists of two
independently generated parts: a current-status statement and the remedial
suggestions. Both are driven by a payload of three pieces, an instruction,
a response template and a JSON data object, which either goes to a
chat-completion endpoint or through the deterministic offline renderer.
"""
from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import httpx

from .cohort import StatsStore, StatsError, decimals_for, round_raw, zscore_inverse
from .counterfactual import Counterfactual
from .dataset import FeatureSchema

PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")
NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")

RECOMMENDATION_VERBS = (
    "should", "must", "increase", "decrease", "raise", "reduce", "switch",
    "improve", "aim", "adjust", "change", "target",
)


class FeedbackError(RuntimeError):
    pass


class PayloadError(ValueError):
    pass


class TemplateValidationError(FeedbackError):
    def __init__(self, message: str, raw_text: str):
        super().__init__(f"{message}\n--- raw response ---\n{raw_text}")
        self.raw_text = raw_text


class DraftConflictError(RuntimeError):
    pass


class DraftNotFoundError(KeyError):
    pass


def display_unit(feature_name: str) -> str:
    n = feature_name.lower()
    if "percent" in n or "grade" in n or "mark" in n:
        return "%"
    if "credits" in n:
        return " credits"
    if n == "age":
        return " years"
    return ""


def display_name(feature_name: str) -> str:
    return feature_name.replace("_", " ")


def format_raw(feature_name: str, value) -> str:
    """Raw value with its unit, rounded by the feature's display precision."""
    if isinstance(value, str):
        return value.replace("_", " ")
    decimals = decimals_for(feature_name)
    rounded = round(float(value), decimals)
    text = f"{rounded:.{decimals}f}" if decimals else f"{int(rounded)}"
    return f"{text}{display_unit(feature_name)}"


@dataclass(frozen=True)
class RawDelta:
    """One pathway change rendered in raw units."""

    feature: str
    display: str
    from_raw: float | str
    to_raw: float | str
    unit: str
    direction: str  # "increase" | "decrease" | "switch"

    def from_text(self) -> str:
        return format_raw(self.feature, self.from_raw)

    def to_text(self) -> str:
        return format_raw(self.feature, self.to_raw)


def _as_label(spec, value):
    if isinstance(value, str):
        return value
    # numeric encodings of a categorical map through the ordered label list
    index = int(round(float(value)))
    if not 0 <= index < len(spec.categories):
        raise PayloadError(f"{spec.name}: no category at index {index}")
    return spec.categories[index]


def denormalize_cf(cf: Counterfactual, stats: StatsStore, schema: FeatureSchema) -> list[RawDelta]:
    """Map a pathway's model-space deltas back into raw units.

    Standardized features invert through the learner's cohort statistics and
    round per feature; category labels map to readable text. Raises when a
    needed cohort statistic is absent, naming the feature and cohort.
    """
    deltas: list[RawDelta] = []
    for name in sorted(cf.deltas):
        from_v, to_v = cf.deltas[name]
        spec = schema[name]
        if spec.is_numeric:
            if spec.engineered:
                try:
                    s = stats.get(cf.cohort_key, name)
                except StatsError:
                    raise StatsError(
                        f"cannot invert feature {name!r}: no statistics for "
                        f"cohort {cf.cohort_key!r}"
                    ) from None
                from_raw = round_raw(name, zscore_inverse(float(from_v), s))
                to_raw = round_raw(name, zscore_inverse(float(to_v), s))
            else:
                from_raw = round_raw(name, float(from_v))
                to_raw = round_raw(name, float(to_v))
            if spec.range is not None and not spec.range[0] <= to_raw <= spec.range[1]:
                raise PayloadError(
                    f"{name}: inverted value {to_raw} falls outside the valid range"
                )
            direction = "increase" if float(to_v) > float(from_v) else "decrease"
        else:
            from_raw = _as_label(spec, from_v)
            to_raw = _as_label(spec, to_v)
            direction = "switch"
        deltas.append(RawDelta(
            feature=name,
            display=display_name(name),
            from_raw=from_raw,
            to_raw=to_raw,
            unit=display_unit(name),
            direction=direction,
        ))
    return deltas


@dataclass
class PromptPayload:
    """Self-contained material for one generation call."""

    part: str  # "status" | "remedial"
    instruction: str
    response_template: str
    data: dict

    def placeholders(self) -> set[str]:
        return set(PLACEHOLDER_RE.findall(self.response_template))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PromptPayload":
        return cls(**json.loads(text))


_STATUS_INSTRUCTION = (
    "You are drafting the first part of feedback for a university learner. "
    "Write a short statement of the learner's current academic standing using "
    "only the values supplied in the data object. Do not suggest any action "
    "and do not introduce numbers that are not in the data. Your response "
    "must stay within the confines of the specified template."
)

_REMEDIAL_INSTRUCTION = (
    "You are drafting the second part of feedback for a university learner: "
    "specific, measurable study adjustments. Express each adjustment listed "
    "in the data object using its given values, and nothing else. Do not "
    "introduce numbers that are not in the data. Your response must stay "
    "within the confines of the specified template."
)

_DIRECTION_PHRASES = {
    "increase": "Raise your {display} from {{{{{key}_from}}}} to {{{{{key}_to}}}}.",
    "decrease": "Bring your {display} down from {{{{{key}_from}}}} to {{{{{key}_to}}}}.",
    "switch": "Switch your {display} from {{{{{key}_from}}}} to {{{{{key}_to}}}}.",
}


def default_allowed_fields(schema: FeatureSchema | None = None) -> set[str]:
    fields_ = {"learner_ref", "academic_year"}
    if schema is not None:
        for name in schema.names():
            fields_.update({name, f"{name}_from", f"{name}_to"})
    return fields_


def build_prompt_payload(
    part: str,
    student_facts: dict,
    deltas: list[RawDelta],
    allowed_fields: set[str] | None = None,
) -> PromptPayload:
    """Assemble instruction, response template and data for one part.

    The status part describes current values only; the remedial part needs
    at least one raw delta. Every template placeholder must resolve to a
    data key and every data key must be whitelisted.
    """
    if part not in ("status", "remedial"):
        raise PayloadError(f"unknown part {part!r}")

    if part == "status":
        if not student_facts:
            raise PayloadError("status part requires current student facts")
        data = {"learner_ref": str(student_facts.get("learner_ref", "the learner"))}
        lines = ["Dear {{learner_ref}},", "", "Here is your current academic standing:"]
        for key in sorted(k for k in student_facts if k != "learner_ref"):
            data[key] = format_raw(key, student_facts[key])
            lines.append(f"- Your {display_name(key)} is {{{{{key}}}}}.")
        template = "\n".join(lines)
        instruction = _STATUS_INSTRUCTION
    else:
        if not deltas:
            raise PayloadError("remedial part requires at least one change")
        data = {"learner_ref": str(student_facts.get("learner_ref", "the learner"))}
        lines = [
            "Dear {{learner_ref}},",
            "",
            "The following adjustments are associated with successful completion:",
        ]
        for i, delta in enumerate(deltas, start=1):
            key = delta.feature
            data[f"{key}_from"] = delta.from_text()
            data[f"{key}_to"] = delta.to_text()
            phrase = _DIRECTION_PHRASES[delta.direction].format(
                display=delta.display, key=key
            )
            lines.append(f"{i}. {phrase}")
        template = "\n".join(lines)
        instruction = _REMEDIAL_INSTRUCTION

    payload = PromptPayload(part=part, instruction=instruction,
                            response_template=template, data=data)
    missing = payload.placeholders() - set(data)
    if missing:
        raise PayloadError(f"template placeholders without data: {sorted(missing)}")
    allowed = allowed_fields if allowed_fields is not None else default_allowed_fields()
    extra = set(data) - allowed - {"learner_ref", "academic_year"}
    if allowed_fields is not None and extra:
        raise PayloadError(f"data fields outside the whitelist: {sorted(extra)}")
    return payload


def render_prompt(p: PromptPayload) -> str:
    """Instruction, template and serialized data in fixed order;
    byte-deterministic for equal payloads."""
    data_json = json.dumps(p.data, sort_keys=True, indent=2)
    return (
        f"{p.instruction}\n\n"
        f"Response template:\n{p.response_template}\n\n"
        f"Data:\n{data_json}\n"
    )


def render_offline(p: PromptPayload) -> str:
    """Deterministic template substitution; substituted values are bolded."""

    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in p.data:
            raise PayloadError(f"placeholder {{{{{key}}}}} has no data value")
        return f"**{p.data[key]}**"

    return PLACEHOLDER_RE.sub(sub, p.response_template)


def _numbers_in(text: str) -> set[str]:
    return {m.lstrip("-").lstrip("+") for m in NUMBER_RE.findall(text)}


def validate_response(text: str, payload: PromptPayload) -> None:
    """Reject responses that break the template shape or invent numbers.

    Template literals (with placeholders elided) must appear in order, and
    every number in the response must occur in a payload data value.
    """
    literals = [seg.strip() for seg in PLACEHOLDER_RE.split(payload.response_template)]
    literals = [seg for i, seg in enumerate(literals) if i % 2 == 0 and seg]
    cursor = 0
    for segment in literals:
        found = text.find(segment, cursor)
        if found < 0:
            raise TemplateValidationError(
                f"response strays from the template near {segment[:48]!r}", text
            )
        cursor = found + len(segment)

    allowed = _numbers_in(payload.response_template)
    for value in payload.data.values():
        allowed |= _numbers_in(str(value))
    rogue = _numbers_in(text) - allowed
    if rogue:
        raise TemplateValidationError(
            f"response contains numbers absent from the payload: {sorted(rogue)}", text
        )


@dataclass
class LlmConfig:
    mode: str = "offline"  # "offline" | "live"
    endpoint: str = ""
    api_key: str = ""
    model: str = "gpt-4o-mini"
    temperature: float = 0.0
    max_retries: int = 3
    backoff_base: float = 0.5
    timeout: float = 15.0
    max_response_chars: int = 4000

    @classmethod
    def from_env(cls, **overrides) -> "LlmConfig":
        cfg = cls(
            mode=os.environ.get("RISKPATH_LLM_MODE", "offline"),
            endpoint=os.environ.get("RISKPATH_LLM_ENDPOINT", ""),
            api_key=os.environ.get("RISKPATH_LLM_API_KEY", ""),
        )
        for key, value in overrides.items():
            setattr(cfg, key, value)
        return cfg


def generate_feedback_text(p: PromptPayload, cfg: LlmConfig) -> tuple[str, str]:
    """Produce feedback text for one payload.

    Offline mode substitutes the template locally. Live mode posts a
    chat-completion request with bounded, backed-off retries and validates
    the response against the payload before accepting it.
    Returns (text, provenance).
    """
    if cfg.mode not in ("offline", "live"):
        raise FeedbackError(f"unknown mode {cfg.mode!r}")
    if cfg.mode == "offline":
        return render_offline(p), "offline-template"

    if not cfg.endpoint:
        raise FeedbackError("live mode requires an endpoint; offline mode is available")
    body = {
        "model": cfg.model,
        "temperature": cfg.temperature,
        "messages": [{"role": "user", "content": render_prompt(p)}],
    }
    headers = {"Content-Type": "application/json"}
    if cfg.api_key:
        headers["Authorization"] = f"Bearer {cfg.api_key}"

    last_error: Exception | None = None
    for attempt in range(cfg.max_retries):
        try:
            response = httpx.post(cfg.endpoint, json=body, headers=headers,
                                  timeout=cfg.timeout)
            response.raise_for_status()
            text = response.json()["choices"][0]["message"]["content"]
            text = text[: cfg.max_response_chars]
            validate_response(text, p)
            return text, "llm"
        except TemplateValidationError:
            raise
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            last_error = exc
            if attempt + 1 < cfg.max_retries and cfg.backoff_base > 0:
                time.sleep(cfg.backoff_base * (2 ** attempt))
    raise FeedbackError(
        f"chat-completion request failed after {cfg.max_retries} attempts "
        f"({last_error}); consider mode='offline'"
    )


@dataclass
class FeedbackDraft:
    draft_id: str
    student_ref: str
    pf_index: int
    status_text: str
    remedial_text: str
    provenance: str
    created_at: float
    approved: bool = False
    advisor_note: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


class DraftStore:
    """Thread-safe draft registry with an append-only event log.

    Approval is compare-and-set: exactly one of any number of concurrent
    approvals succeeds, and approved drafts never change again.
    """

    def __init__(self, log_path: str | Path | None = None):
        self._drafts: dict[str, FeedbackDraft] = {}
        self._lock = threading.Lock()
        self._counter = 0
        self._log_path = Path(log_path) if log_path else None
        if self._log_path and self._log_path.exists():
            self._replay()

    def _replay(self) -> None:
        for line in self._log_path.read_text(encoding="utf-8").splitlines():
            event = json.loads(line)
            if event["event"] == "draft":
                draft = FeedbackDraft(**event["draft"])
                self._drafts[draft.draft_id] = draft
                seq = int(draft.draft_id.split("-")[1])
                self._counter = max(self._counter, seq)
            elif event["event"] == "approve":
                draft = self._drafts[event["draft_id"]]
                draft.approved = True
                draft.advisor_note = event.get("note", "")

    def _append(self, event: dict) -> None:
        if self._log_path:
            with self._log_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")

    def create(self, student_ref: str, pf_index: int, status_text: str,
               remedial_text: str, provenance: str) -> FeedbackDraft:
        with self._lock:
            self._counter += 1
            draft = FeedbackDraft(
                draft_id=f"draft-{self._counter:05d}",
                student_ref=student_ref,
                pf_index=pf_index,
                status_text=status_text,
                remedial_text=remedial_text,
                provenance=provenance,
                created_at=time.time(),
            )
            self._drafts[draft.draft_id] = draft
            self._append({"event": "draft", "draft": draft.as_dict()})
            return draft

    def get(self, draft_id: str) -> FeedbackDraft:
        try:
            return self._drafts[draft_id]
        except KeyError:
            raise DraftNotFoundError(draft_id) from None

    def approve(self, draft_id: str, note: str = "") -> FeedbackDraft:
        with self._lock:
            draft = self.get(draft_id)
            if draft.approved:
                raise DraftConflictError(f"{draft_id} is already approved")
            draft.approved = True
            draft.advisor_note = note
            self._append({"event": "approve", "draft_id": draft_id, "note": note})
            return draft

    def all_drafts(self) -> list[FeedbackDraft]:
        return [self._drafts[k] for k in sorted(self._drafts)]
