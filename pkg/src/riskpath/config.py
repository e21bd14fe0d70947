"""One configuration object for the whole pipeline, file-overridable.

Defaults live in code; a JSON config file overrides fields section by
section and command-line flags override the file.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from .anchors import AnchorConfig
from .boosting import Hyperparams
from .counterfactual import CfWeights, SearchConfig
from .feedback import LlmConfig
from .synth import (
    CategoricalFieldConfig,
    GeneratorConfig,
    NumericFieldConfig,
    default_generator_config,
)


@dataclass
class ShapSettings:
    background_n: int = 100
    n_samples: int = 1024
    global_rows: int = 40


@dataclass
class CfSettings:
    k: int = 3
    max_changed: int = 3
    weights: CfWeights = field(default_factory=CfWeights)
    search: SearchConfig = field(default_factory=SearchConfig)


@dataclass
class TuneSettings:
    n_iter: int = 10
    k_tune: int = 5
    k_final: int = 10


@dataclass
class ServiceSettings:
    host: str = "127.0.0.1"
    port: int = 8000
    token: str = ""


@dataclass
class AppConfig:
    generator: GeneratorConfig = field(default_factory=default_generator_config)
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    prescriptive_hyperparams: Hyperparams = field(
        default_factory=lambda: Hyperparams(n_estimators=150, max_depth=3)
    )
    shap: ShapSettings = field(default_factory=ShapSettings)
    anchors: AnchorConfig = field(default_factory=AnchorConfig)
    cf: CfSettings = field(default_factory=CfSettings)
    tuning: TuneSettings = field(default_factory=TuneSettings)
    llm: LlmConfig = field(default_factory=LlmConfig)
    service: ServiceSettings = field(default_factory=ServiceSettings)


def _apply_overrides(obj, overrides: dict):
    """Replace dataclass fields from a plain dict, recursing into nested
    dataclasses. Unknown keys raise so typos never pass silently."""
    known = {f.name: f for f in fields(obj)}
    updates = {}
    for key, value in overrides.items():
        if key not in known:
            raise KeyError(f"unknown config key {key!r} for {type(obj).__name__}")
        current = getattr(obj, key)
        if is_dataclass(current) and isinstance(value, dict):
            updates[key] = _apply_overrides(current, value)
        elif key == "numeric" and isinstance(value, dict):
            merged = dict(current)
            for name, spec in value.items():
                base = merged.get(name, NumericFieldConfig(0.0, 1.0))
                merged[name] = replace(base, **spec)
            updates[key] = merged
        elif key == "categorical" and isinstance(value, dict):
            merged = dict(current)
            for name, spec in value.items():
                spec = {k: tuple(v) if isinstance(v, list) else v for k, v in spec.items()}
                base = merged.get(name)
                merged[name] = replace(base, **spec) if base else CategoricalFieldConfig(**spec)
            updates[key] = merged
        elif isinstance(current, tuple) and isinstance(value, list):
            updates[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        elif isinstance(current, frozenset) and isinstance(value, list):
            updates[key] = frozenset(value)
        else:
            updates[key] = value
    try:
        return replace(obj, **updates)
    except TypeError:
        clone = type(obj)(**{f.name: getattr(obj, f.name) for f in fields(obj)})
        for key, value in updates.items():
            setattr(clone, key, value)
        return clone


def load_config(path: str | Path | None = None) -> AppConfig:
    cfg = AppConfig()
    if path is None:
        return cfg
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return _apply_overrides(cfg, doc)
