"""Diverse counterfactual pathways to a completion prediction.

Given a row the model places on the non-completion side, a seeded genetic
search mutates actionable features over discrete value grids (standardized
features step by 0.25, counts by whole units, categories toggle) to find
minimal, constraint-respecting changes that flip the prediction. Candidates
are scored on validity, range-normalized proximity and changed-feature
count; the returned set is picked greedily so pathways stay mutually
distinct.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import FeatureSchema, MISSING_LABEL

Z_GRID_LIMIT = 3.0
Z_GRID_STEP = 0.25


class ConstraintViolation(ValueError):
    pass


class NoFeasiblePathway(RuntimeError):
    """Search ended without a single valid candidate; carries the best
    invalid one for diagnostics."""

    def __init__(self, message: str, best_candidate: dict | None = None):
        super().__init__(message)
        self.best_candidate = best_candidate


@dataclass(frozen=True)
class CfConstraints:
    """Which features may move and how far.

    ``ranges`` are feasibility bounds in model space (standardized units for
    engineered features). ``monotone`` locks a feature to "increase" or
    "decrease" relative to its current value. ``grids`` overrides the
    candidate value grid of a feature outright.
    """

    actionable: frozenset
    frozen: frozenset = frozenset()
    ranges: dict = field(default_factory=dict)
    max_changed: int = 3
    monotone: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)

    def __post_init__(self):
        overlap = set(self.actionable) & set(self.frozen)
        if overlap:
            raise ConstraintViolation(
                f"features cannot be both actionable and frozen: {sorted(overlap)}"
            )
        if self.max_changed < 1:
            raise ConstraintViolation("max_changed must be at least 1")
        for name, direction in self.monotone.items():
            if direction not in ("increase", "decrease"):
                raise ConstraintViolation(
                    f"{name}: monotone hint must be 'increase' or 'decrease'"
                )


@dataclass(frozen=True)
class CfWeights:
    validity: float = 2.0
    proximity: float = 0.5
    sparsity: float = 0.3
    diversity: float = 0.2


@dataclass(frozen=True)
class SearchConfig:
    population: int = 200
    generations: int = 100
    elite_frac: float = 0.1
    crossover_rate: float = 0.7
    mutation_rate: float = 0.9
    threshold: float = 0.5  # completion probability decision boundary


@dataclass
class Counterfactual:
    """A candidate set of feature deltas in model space, with its scores."""

    deltas: dict  # feature -> (from_value, to_value)
    predicted_prob_after: float
    valid: bool
    proximity: float
    sparsity: int
    diversity: float = 0.0
    feasible: bool = True
    cohort_key: str = ""

    def apply_to(self, row: dict) -> dict:
        out = dict(row)
        for name, (_, to_value) in self.deltas.items():
            out[name] = to_value
        return out


@dataclass
class CandidateScores:
    valid: bool
    validity_hinge: float
    proximity: float
    sparsity: int
    diversity: float

    def total(self, w: CfWeights) -> float:
        return (
            w.validity * self.validity_hinge
            + w.proximity * self.proximity
            + w.sparsity * self.sparsity
            + w.diversity * (-self.diversity)
        )


def default_grid(spec, constraints: CfConstraints, current) -> list:
    """Candidate values for one actionable feature."""
    name = spec.name
    if name in constraints.grids:
        values = list(constraints.grids[name])
    elif not spec.is_numeric:
        values = [c for c in spec.categories if c != MISSING_LABEL]
    else:
        if spec.engineered:
            lo, hi = -Z_GRID_LIMIT, Z_GRID_LIMIT
            step = Z_GRID_STEP
        else:
            lo, hi = spec.range if spec.range else (-Z_GRID_LIMIT, Z_GRID_LIMIT)
            step = 1.0
        if name in constraints.ranges:
            clo, chi = constraints.ranges[name]
            lo, hi = max(lo, clo), min(hi, chi)
        values = [float(v) for v in np.round(np.arange(lo, hi + step / 2, step), 10)]
    if spec.is_numeric:
        if name in constraints.ranges:
            clo, chi = constraints.ranges[name]
            values = [v for v in values if clo <= v <= chi]
        hint = constraints.monotone.get(name)
        if hint == "increase":
            values = [v for v in values if v >= float(current)]
        elif hint == "decrease":
            values = [v for v in values if v <= float(current)]
    return values


def _ranges_for(schema: FeatureSchema, names, constraints: CfConstraints) -> dict:
    spans = {}
    for name in names:
        spec = schema[name]
        if not spec.is_numeric:
            spans[name] = None
            continue
        if spec.engineered:
            lo, hi = -Z_GRID_LIMIT, Z_GRID_LIMIT
        else:
            lo, hi = spec.range if spec.range else (-Z_GRID_LIMIT, Z_GRID_LIMIT)
        if name in constraints.ranges:
            clo, chi = constraints.ranges[name]
            lo, hi = max(lo, clo), min(hi, chi)
        spans[name] = (lo, hi)
    return spans


def _deltas(row: dict, candidate: dict, actionable) -> dict:
    out = {}
    for name in actionable:
        a, b = row.get(name), candidate.get(name)
        if a != b:
            out[name] = (a, b)
    return out


def _proximity(deltas: dict, spans: dict) -> float:
    total = 0.0
    for name, (a, b) in deltas.items():
        span = spans.get(name)
        if span is None:
            total += 1.0  # categorical switch counts as a full step
        else:
            lo, hi = span
            width = hi - lo if hi > lo else 1.0
            total += abs(float(b) - float(a)) / width
    return total


def _normalized_distance(c1: dict, c2: dict, actionable, spans: dict) -> float:
    total = 0.0
    for name in actionable:
        a, b = c1.get(name), c2.get(name)
        if a == b:
            continue
        span = spans.get(name)
        if span is None:
            total += 1.0
        else:
            lo, hi = span
            width = hi - lo if hi > lo else 1.0
            total += abs(float(b) - float(a)) / width
    return total


def check_constraints(row: dict, candidate: dict, schema: FeatureSchema,
                      c: CfConstraints) -> None:
    """Raise on frozen-feature edits, range exits or monotone violations."""
    spans = _ranges_for(schema, [n for n in candidate if n in schema], c)
    for name, value in candidate.items():
        if value == row.get(name):
            continue
        if name in c.frozen or name not in c.actionable:
            raise ConstraintViolation(f"feature {name!r} is not actionable")
        spec = schema[name]
        if spec.is_numeric:
            lo, hi = spans[name]
            if not lo <= float(value) <= hi:
                raise ConstraintViolation(
                    f"feature {name!r}: value {value} outside [{lo}, {hi}]"
                )
            hint = c.monotone.get(name)
            if hint == "increase" and float(value) < float(row[name]):
                raise ConstraintViolation(f"feature {name!r} may only increase")
            if hint == "decrease" and float(value) > float(row[name]):
                raise ConstraintViolation(f"feature {name!r} may only decrease")
        elif value not in spec.categories:
            raise ConstraintViolation(f"feature {name!r}: unknown label {value!r}")


def score_candidate(
    predict_fn,
    row: dict,
    candidate: dict,
    schema: FeatureSchema,
    c: CfConstraints,
    weights: CfWeights | None = None,
    others: tuple = (),
    threshold: float = 0.5,
) -> CandidateScores:
    """Loss components of one candidate; the weighted total recomposes from
    the parts exactly. ``others`` feeds the diversity term (mean distance to
    already selected candidates), zero when empty."""
    weights = weights or CfWeights()
    check_constraints(row, candidate, schema, c)
    actionable = sorted(c.actionable)
    spans = _ranges_for(schema, actionable, c)
    deltas = _deltas(row, candidate, actionable)
    p = float(np.asarray(predict_fn([candidate]))[0])
    diversity = 0.0
    if others:
        diversity = float(
            np.mean([_normalized_distance(candidate, o, actionable, spans) for o in others])
        )
    return CandidateScores(
        valid=p >= threshold,
        validity_hinge=max(0.0, threshold - p),
        proximity=_proximity(deltas, spans),
        sparsity=len(deltas),
        diversity=diversity,
    )


def _signature(deltas: dict) -> tuple:
    return tuple(sorted((name, str(to)) for name, (_, to) in deltas.items()))


def generate_counterfactuals(
    predict_fn,
    row: dict,
    k: int,
    c: CfConstraints,
    schema: FeatureSchema,
    weights: CfWeights | None = None,
    seed: int = 0,
    config: SearchConfig | None = None,
    cohort_key: str = "",
) -> list[Counterfactual]:
    """Seeded genetic search for up to k minimal valid pathways.

    ``predict_fn`` maps a list of candidate dicts to completion
    probabilities. Raises :class:`NoFeasiblePathway` when no candidate flips
    the prediction within the generation budget.
    """
    weights = weights or CfWeights()
    config = config or SearchConfig()
    if k < 1:
        raise ValueError("k must be at least 1")
    actionable = sorted(n for n in c.actionable if n in schema)
    if not actionable:
        raise NoFeasiblePathway("no actionable feature to vary")
    p_row = float(np.asarray(predict_fn([row]))[0])
    if p_row >= config.threshold:
        raise ValueError("row is already predicted as completing; nothing to flip")

    grids = {}
    for name in actionable:
        values = default_grid(schema[name], c, row.get(name))
        values = [v for v in values if v != row.get(name)]
        if values:
            grids[name] = values
    mutable = sorted(grids)
    if not mutable:
        raise NoFeasiblePathway("constraint grids leave no room to move")
    spans = _ranges_for(schema, actionable, c)

    rng = np.random.default_rng(seed)

    def mutate(candidate: dict) -> None:
        name = mutable[int(rng.integers(len(mutable)))]
        values = grids[name]
        candidate[name] = values[int(rng.integers(len(values)))]

    def repair(candidate: dict) -> None:
        changed = [n for n in mutable if candidate[n] != row.get(n)]
        while len(changed) > c.max_changed:
            victim = changed.pop(int(rng.integers(len(changed))))
            candidate[victim] = row.get(victim)

    def revert_some(candidate: dict) -> None:
        changed = [n for n in mutable if candidate[n] != row.get(n)]
        if len(changed) > 1 and rng.random() < 0.3:
            victim = changed[int(rng.integers(len(changed)))]
            candidate[victim] = row.get(victim)

    population: list[dict] = []
    for _ in range(config.population):
        cand = dict(row)
        n_changes = 1 + int(rng.integers(c.max_changed))
        for _ in range(n_changes):
            mutate(cand)
        repair(cand)
        population.append(cand)

    def losses_and_probs(pop: list[dict]):
        probs = np.asarray(predict_fn(pop), dtype=np.float64)
        losses = np.empty(len(pop))
        for i, cand in enumerate(pop):
            deltas = _deltas(row, cand, mutable)
            hinge = max(0.0, config.threshold - probs[i])
            losses[i] = (
                weights.validity * hinge
                + weights.proximity * _proximity(deltas, spans)
                + weights.sparsity * len(deltas)
            )
        return losses, probs

    archive: dict[tuple, tuple[float, dict, float]] = {}
    best_invalid: tuple[float, dict, float] | None = None
    elite_n = max(1, int(config.elite_frac * config.population))

    for _ in range(config.generations):
        losses, probs = losses_and_probs(population)
        order = np.argsort(losses, kind="stable")
        for i in order:
            cand, p = population[int(i)], float(probs[int(i)])
            deltas = _deltas(row, cand, mutable)
            entry = (float(losses[int(i)]), cand, p)
            if p >= config.threshold and deltas:
                sig = _signature(deltas)
                if sig not in archive or entry[0] < archive[sig][0]:
                    archive[sig] = entry
            elif best_invalid is None or entry[0] < best_invalid[0]:
                best_invalid = entry

        elites = [dict(population[int(i)]) for i in order[:elite_n]]
        children: list[dict] = []
        while len(children) < config.population - elite_n:
            i, j = rng.integers(len(population), size=2)
            a, b = population[int(i)], population[int(j)]
            parent = a if losses[int(i)] <= losses[int(j)] else b
            child = dict(parent)
            if rng.random() < config.crossover_rate:
                m, n = rng.integers(len(population), size=2)
                mate = population[int(m if losses[int(m)] <= losses[int(n)] else n)]
                for name in mutable:
                    if rng.random() < 0.5:
                        child[name] = mate[name]
            if rng.random() < config.mutation_rate:
                mutate(child)
            revert_some(child)
            repair(child)
            children.append(child)
        population = elites + children

    if not archive:
        raise NoFeasiblePathway(
            "no feasible pathway: search found no valid candidate",
            best_candidate=best_invalid[1] if best_invalid else None,
        )

    ranked = sorted(archive.items(), key=lambda kv: (kv[1][0], kv[0]))
    selected: list[tuple[tuple, float, dict, float]] = []
    remaining = [(sig, loss, cand, p) for sig, (loss, cand, p) in ranked]
    while remaining and len(selected) < k:
        if not selected:
            selected.append(remaining.pop(0))
            continue
        # later picks trade loss against distance to what is already chosen
        best_idx, best_score = 0, None
        for idx, (_, loss, cand, _) in enumerate(remaining):
            dist = min(
                _normalized_distance(cand, chosen[2], mutable, spans)
                for chosen in selected
            )
            score = loss - weights.diversity * dist
            if best_score is None or score < best_score:
                best_idx, best_score = idx, score
        selected.append(remaining.pop(best_idx))

    results = []
    for sig, loss, cand, p in selected:
        deltas = _deltas(row, cand, mutable)
        div = 0.0
        if len(selected) > 1:
            div = float(np.mean([
                _normalized_distance(cand, other[2], mutable, spans)
                for other in selected if other[0] != sig
            ]))
        results.append(Counterfactual(
            deltas=deltas,
            predicted_prob_after=p,
            valid=p >= config.threshold,
            proximity=_proximity(deltas, spans),
            sparsity=len(deltas),
            diversity=div,
            feasible=True,
            cohort_key=cohort_key,
        ))
    return results


def filter_feasible(cfs: list[Counterfactual], c: CfConstraints,
                    schema: FeatureSchema) -> list[Counterfactual]:
    """Drop candidates that violate ranges, frozen features, the change
    budget or monotone hints; order is preserved."""
    spans = _ranges_for(schema, [n for n in schema.names()], c)
    kept = []
    for cf in cfs:
        if cf.sparsity > c.max_changed or len(cf.deltas) > c.max_changed:
            continue
        ok = True
        for name, (from_v, to_v) in cf.deltas.items():
            if name in c.frozen or name not in c.actionable:
                ok = False
                break
            spec = schema[name]
            if spec.is_numeric:
                lo, hi = spans[name]
                if not lo <= float(to_v) <= hi:
                    ok = False
                    break
                hint = c.monotone.get(name)
                if hint == "increase" and float(to_v) < float(from_v):
                    ok = False
                    break
                if hint == "decrease" and float(to_v) > float(from_v):
                    ok = False
                    break
            elif to_v not in spec.categories:
                ok = False
                break
        if ok:
            kept.append(cf)
    return kept


def export_cf_table(row: dict, cfs: list[Counterfactual], schema: FeatureSchema) -> dict:
    """Side-by-side pathway table: one row per touched feature, the actual
    value first, then one column per pathway with a dash where unchanged."""
    touched: list[str] = []
    for name in schema.names():
        if any(name in cf.deltas for cf in cfs):
            touched.append(name)

    def fmt(name, value):
        if value is None:
            return ""
        if schema[name].is_numeric:
            return f"{float(value):.2f}"
        return str(value)

    rows = []
    for name in touched:
        line = [name, fmt(name, row.get(name))]
        for cf in cfs:
            if name in cf.deltas:
                line.append(fmt(name, cf.deltas[name][1]))
            else:
                line.append("-")
        rows.append(line)
    return {
        "columns": ["feature", "actual"] + [f"PF{i + 1}" for i in range(len(cfs))],
        "rows": rows,
    }
