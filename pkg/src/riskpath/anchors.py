"""High-precision rule explanations for single predictions.

An anchor is a short conjunction of predicates over the explained row's
feature values such that perturbed inputs satisfying the rule keep the
model's prediction with high estimated precision. Candidates are built from
the row's own values and dataset quartiles, searched greedily with a beam,
and gated on a binomial lower confidence bound.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataset import Dataset


class UndefinedPrecisionError(RuntimeError):
    """No perturbed sample satisfied the rule, leaving precision undefined."""


@dataclass(frozen=True)
class Predicate:
    feature: str
    op: str  # "<=", ">", "=="
    value: float | str
    display: str | None = None  # optional raw-unit rendering of value

    def __post_init__(self):
        if self.op not in ("<=", ">", "=="):
            raise ValueError(f"unknown operator {self.op!r}")

    def holds(self, values: dict) -> bool:
        v = values.get(self.feature)
        if v is None:
            return False
        if self.op == "==":
            return v == self.value
        if self.op == "<=":
            return float(v) <= float(self.value)
        return float(v) > float(self.value)

    def render(self) -> str:
        shown = self.display if self.display is not None else self.value
        if isinstance(shown, float):
            shown = f"{shown:g}"
        return f"{self.feature} {self.op} {shown}"


@dataclass
class AnchorRule:
    predicates: tuple[Predicate, ...]
    precision: float
    precision_lb: float
    coverage: float
    predicted_class: int
    anchored: bool = True

    def holds(self, values: dict) -> bool:
        return all(p.holds(values) for p in self.predicates)

    def render_lines(self) -> list[str]:
        return [p.render() for p in self.predicates]


@dataclass(frozen=True)
class AnchorConfig:
    tau: float = 0.95
    beam_width: int = 4
    max_len: int = 5
    n_samples: int = 1000
    confidence_z: float = 1.96  # two-sided 95%


def wilson_lower_bound(successes: int, n: int, z: float = 1.96) -> float:
    if n == 0:
        return 0.0
    p = successes / n
    denom = 1 + z * z / n
    centre = p + z * z / (2 * n)
    margin = z * np.sqrt((p * (1 - p) + z * z / (4 * n)) / n)
    return max(0.0, (centre - margin) / denom)


class _Marginals:
    """Per-feature empirical value pools drawn from the dataset."""

    def __init__(self, dataset: Dataset):
        self.features = dataset.schema.names()
        self.pools: dict[str, list] = {}
        for name in self.features:
            observed = [v for v in dataset.column(name) if v is not None]
            self.pools[name] = observed if observed else [None]

    def restricted_pools(self, predicates, row: dict) -> dict[str, list]:
        """Marginal pools narrowed to values satisfying the predicates, with
        the row's own value as fallback when nothing in the data qualifies."""
        pools: dict[str, list] = {}
        for feature in {p.feature for p in predicates}:
            preds = [p for p in predicates if p.feature == feature]
            pool = [
                v for v in self.pools[feature]
                if v is not None and all(p.holds({feature: v}) for p in preds)
            ]
            pools[feature] = pool if pool else [row[feature]]
        return pools

    def sample_rows(self, rng: np.random.Generator, n: int,
                    pools_override: dict | None = None) -> list[dict]:
        pools_override = pools_override or {}
        rows = [dict() for _ in range(n)]
        for name in self.features:
            pool = pools_override.get(name, self.pools[name])
            draws = rng.integers(len(pool), size=n)
            for i in range(n):
                rows[i][name] = pool[int(draws[i])]
        return rows


def _candidate_predicates(row: dict, dataset: Dataset) -> list[Predicate]:
    """Predicates the row itself satisfies: equality on its category labels,
    and threshold predicates at the dataset quartiles plus the row value."""
    candidates: list[Predicate] = []
    for spec in dataset.schema:
        name = spec.name
        v = row.get(name)
        if v is None:
            continue
        if not spec.is_numeric:
            candidates.append(Predicate(name, "==", v))
            continue
        observed = [float(x) for x in dataset.column(name) if x is not None]
        thresholds = set(np.quantile(observed, [0.25, 0.5, 0.75]).tolist()) if observed else set()
        thresholds.add(float(v))
        for t in sorted(thresholds):
            if float(v) <= t:
                candidates.append(Predicate(name, "<=", t))
            else:
                candidates.append(Predicate(name, ">", t))
    return candidates


def _coverage(predicates: tuple[Predicate, ...], rows: list[dict]) -> float:
    if not rows:
        return 0.0
    hits = sum(1 for r in rows if all(p.holds(r) for p in predicates))
    return hits / len(rows)


def _search_precision(
    classify, predicates, row, marginals, target, n_samples, rng
) -> tuple[float, float]:
    """Precision under search semantics: constrained features resample from
    the predicate-satisfying slice of their marginals, the rest from the
    full marginals, so every sample satisfies the rule by construction."""
    pools = marginals.restricted_pools(predicates, row)
    samples = marginals.sample_rows(rng, n_samples, pools)
    labels = np.asarray(classify(samples))
    successes = int((labels == target).sum())
    return successes / n_samples, wilson_lower_bound(successes, n_samples)


def find_anchor(
    classify,
    row: dict,
    d: Dataset,
    tau: float = 0.95,
    seed: int = 0,
    config: AnchorConfig | None = None,
) -> AnchorRule:
    """Beam-search the shortest rule whose precision lower bound reaches tau.

    ``classify`` maps a list of feature dicts to predicted class labels.
    When no rule reaches tau within the length budget, the best candidate
    found is returned flagged ``anchored=False``.
    """
    if not 0.5 < tau <= 1.0:
        raise ValueError("tau must lie in (0.5, 1]")
    config = config or AnchorConfig()
    if config.tau != tau:
        config = replace(config, tau=tau)
    target = int(np.asarray(classify([row]))[0])
    marginals = _Marginals(d)
    dataset_rows = d.value_rows()
    candidates = _candidate_predicates(row, d)

    def rule_key(pred_set: tuple[Predicate, ...]) -> tuple:
        return tuple(sorted((p.feature, p.op, str(p.value)) for p in pred_set))

    beam: list[tuple[Predicate, ...]] = [()]
    seen: set[tuple] = set()
    best_overall = None  # (lb, coverage, precision, predicates)

    seq = np.random.SeedSequence([seed])
    for level in range(1, config.max_len + 1):
        level_rng = np.random.default_rng(seq.spawn(1)[0])
        scored: list[tuple[float, float, float, tuple[Predicate, ...]]] = []
        for stem in beam:
            used = {(p.feature, p.op, str(p.value)) for p in stem}
            for cand in candidates:
                if (cand.feature, cand.op, str(cand.value)) in used:
                    continue
                if any(p.feature == cand.feature and p.op == cand.op for p in stem):
                    continue
                pred_set = stem + (cand,)
                key = rule_key(pred_set)
                if key in seen:
                    continue
                seen.add(key)
                precision, lb = _search_precision(
                    classify, pred_set, row, marginals, target,
                    config.n_samples, level_rng,
                )
                coverage = _coverage(pred_set, dataset_rows)
                scored.append((lb, coverage, precision, pred_set))

        if not scored:
            break
        scored.sort(key=lambda s: (-s[0], -s[1], tuple(p.render() for p in s[3])))
        if best_overall is None or (scored[0][0], scored[0][1]) > best_overall[:2]:
            best_overall = scored[0]

        accepted = [s for s in scored if s[0] >= config.tau]
        if accepted:
            accepted.sort(key=lambda s: (-s[1], -s[0], tuple(p.render() for p in s[3])))
            lb, coverage, precision, preds = accepted[0]
            return AnchorRule(
                predicates=preds, precision=precision, precision_lb=lb,
                coverage=coverage, predicted_class=target, anchored=True,
            )
        beam = [s[3] for s in scored[: config.beam_width]]

    lb, coverage, precision, preds = best_overall
    return AnchorRule(
        predicates=preds, precision=precision, precision_lb=lb,
        coverage=coverage, predicted_class=target, anchored=False,
    )


def estimate_precision_coverage(
    rule: AnchorRule,
    classify,
    d: Dataset,
    n_samples: int = 1000,
    seed: int = 0,
) -> tuple[float, float, float]:
    """Re-estimate a rule from unconditioned marginal perturbations.

    Returns (precision, lower confidence bound, coverage). Precision is the
    fraction of rule-satisfying perturbations that keep the anchored class;
    raises when no perturbation satisfies the rule.
    """
    marginals = _Marginals(d)
    rng = np.random.default_rng(seed)
    samples = marginals.sample_rows(rng, n_samples)
    satisfying = [s for s in samples if rule.holds(s)]
    if not satisfying:
        raise UndefinedPrecisionError(
            "no perturbed sample satisfies the rule; precision is undefined"
        )
    labels = np.asarray(classify(satisfying))
    successes = int((labels == rule.predicted_class).sum())
    precision = successes / len(satisfying)
    lb = wilson_lower_bound(successes, len(satisfying))
    coverage = _coverage(rule.predicates, d.value_rows())
    return precision, lb, coverage


def render_rule_table(rule: AnchorRule, actual_values: dict) -> str:
    """Two-column layout: the row's actual value next to each condition."""
    lines = []
    for p in rule.predicates:
        actual = actual_values.get(p.feature, "")
        if isinstance(actual, float):
            actual = f"{actual:g}"
        lines.append(f"{actual!s:>12}    {p.render()}")
    return "\n".join(lines)
