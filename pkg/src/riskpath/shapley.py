"""Per-prediction feature attributions via Shapley values.

Two estimators share one interventional value function: feature coalitions
are evaluated by replacing out-of-coalition features with background rows
and averaging the model margin. ``exact_shap`` enumerates every coalition
(closed under 12 features), ``kernel_shap`` solves the kernel-weighted least
squares system over sampled coalitions with the additivity constraint
eliminated into the solve, so attributions always sum to the prediction
minus the base value.

Attributions live in log-odds (margin) space by default, which keeps the
additive decomposition exact for a boosted model.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

FeatureGroups = list[tuple[str, list[int]]]

MAX_EXACT_FEATURES = 12


@dataclass
class Attribution:
    """Signed per-feature contributions to one prediction.

    ``base_value + sum(phi.values())`` equals ``model_output`` (exactly for
    the enumerating estimator, to solver tolerance for the sampled one).
    """

    base_value: float
    phi: dict[str, float]
    model_output: float
    target_space: str = "log-odds"
    feature_values: dict[str, str] = field(default_factory=dict)

    def additivity_gap(self) -> float:
        return abs(self.base_value + sum(self.phi.values()) - self.model_output)


def simple_groups(feature_names: list[str]) -> FeatureGroups:
    """One column per feature, for models over plain numeric matrices."""
    return [(name, [i]) for i, name in enumerate(feature_names)]


def _coalition_values(predict, x, background, groups, masks) -> np.ndarray:
    """Mean margin per coalition mask, replacing out-of-coalition features
    with every background row."""
    x = np.asarray(x, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    if background.ndim == 1:
        background = background[None, :]
    n_bg = background.shape[0]
    values = np.empty(len(masks), dtype=np.float64)
    block = max(1, 131072 // max(n_bg, 1))
    for start in range(0, len(masks), block):
        chunk = masks[start:start + block]
        rows = np.tile(background, (len(chunk), 1))
        for j, mask in enumerate(chunk):
            seg = rows[j * n_bg:(j + 1) * n_bg]
            for bit, (_, cols) in enumerate(groups):
                if (mask >> bit) & 1:
                    seg[:, cols] = x[cols]
        preds = np.asarray(predict(rows), dtype=np.float64)
        values[start:start + len(chunk)] = preds.reshape(len(chunk), n_bg).mean(axis=1)
    return values


def exact_shap(
    predict,
    x: np.ndarray,
    background: np.ndarray,
    groups: FeatureGroups | None = None,
    target_space: str = "log-odds",
) -> Attribution:
    """Exact Shapley attribution by full coalition enumeration.

    ``predict`` maps an (n, d) matrix to n margins. Refuses more than
    12 feature groups; use :func:`kernel_shap` beyond that.
    """
    x = np.asarray(x, dtype=np.float64)
    if groups is None:
        groups = simple_groups([f"x{i}" for i in range(x.shape[-1])])
    M = len(groups)
    if M > MAX_EXACT_FEATURES:
        raise ValueError(
            f"{M} features exceed the enumeration limit of {MAX_EXACT_FEATURES}; "
            "use kernel_shap"
        )
    masks = list(range(1 << M))
    v = _coalition_values(predict, x, background, groups, masks)

    # weight of a coalition of size s when adding one feature
    w = [math.factorial(s) * math.factorial(M - s - 1) / math.factorial(M) for s in range(M)]
    phi = np.zeros(M, dtype=np.float64)
    for mask in masks:
        s = bin(mask).count("1")
        for i in range(M):
            if not (mask >> i) & 1:
                phi[i] += w[s] * (v[mask | (1 << i)] - v[mask])

    return Attribution(
        base_value=float(v[0]),
        phi={name: float(phi[i]) for i, (name, _) in enumerate(groups)},
        model_output=float(v[(1 << M) - 1]),
        target_space=target_space,
    )


def shapley_kernel_weight(M: int, s: int) -> float:
    return (M - 1) / (math.comb(M, s) * s * (M - s))


def _solve_constrained_wls(Z, w, g, delta):
    """Weighted least squares with the contributions constrained to sum to
    ``delta``; the last coefficient is eliminated through the constraint."""
    M = Z.shape[1]
    A = Z[:, :-1] - Z[:, -1:]
    b = g - Z[:, -1] * delta
    sw = np.sqrt(w)
    sol, _, rank, _ = np.linalg.lstsq(A * sw[:, None], b * sw, rcond=None)
    if rank < M - 1:
        raise np.linalg.LinAlgError("degenerate coalition design")
    phi = np.empty(M)
    phi[:-1] = sol
    phi[-1] = delta - sol.sum()
    return phi


def kernel_shap(
    predict,
    x: np.ndarray,
    background: np.ndarray,
    groups: FeatureGroups | None = None,
    n_samples: int = 2048,
    seed: int = 0,
    target_space: str = "log-odds",
) -> Attribution:
    """Kernel-weighted least-squares Shapley estimate over sampled coalitions.

    With a sample budget covering all 2^M - 2 proper coalitions the system
    is enumerated exactly and the estimate coincides with :func:`exact_shap`.
    A degenerate sampled design is resampled once before raising.
    """
    x = np.asarray(x, dtype=np.float64)
    if groups is None:
        groups = simple_groups([f"x{i}" for i in range(x.shape[-1])])
    M = len(groups)
    if M < 1:
        raise ValueError("no feature groups")
    if n_samples < 2 * M + 2:
        raise ValueError(f"n_samples must be at least 2M+2 = {2 * M + 2}")

    full_mask = (1 << M) - 1
    v_ends = _coalition_values(predict, x, background, groups, [0, full_mask])
    base, fx = float(v_ends[0]), float(v_ends[1])
    delta = fx - base
    if M == 1:
        name = groups[0][0]
        return Attribution(base, {name: delta}, fx, target_space)

    def masks_to_Z(masks):
        Z = np.zeros((len(masks), M))
        for k, mask in enumerate(masks):
            for i in range(M):
                Z[k, i] = (mask >> i) & 1
        return Z

    def masks_of_size(s):
        out = []
        for combo in itertools.combinations(range(M), s):
            mask = 0
            for i in combo:
                mask |= 1 << i
            out.append(mask)
        return out

    def attempt(attempt_seed):
        # enumerate complementary size pairs outright while the budget
        # covers them, then spend the remainder on sampled coalitions
        masks: list[int] = []
        weights: list[float] = []
        remaining = min(n_samples, (1 << M) - 2)
        leftover_sizes: list[int] = []
        for s in range(1, M // 2 + 1):
            comp = M - s
            pair = [s] if comp == s else [s, comp]
            count = sum(math.comb(M, q) for q in pair)
            if count <= remaining:
                for q in pair:
                    w = shapley_kernel_weight(M, q)
                    for mask in masks_of_size(q):
                        masks.append(mask)
                        weights.append(w)
                remaining -= count
            else:
                leftover_sizes.extend(pair)
        if leftover_sizes and remaining > 0:
            rng = np.random.default_rng(attempt_seed)
            sizes = np.array(sorted(leftover_sizes))
            mass = np.array(
                [shapley_kernel_weight(M, s) * math.comb(M, s) for s in sizes]
            )
            probs = mass / mass.sum()
            counts: dict[int, int] = {}
            for s in rng.choice(sizes, size=remaining, p=probs):
                chosen = rng.choice(M, size=int(s), replace=False)
                mask = 0
                for i in chosen:
                    mask |= 1 << int(i)
                counts[mask] = counts.get(mask, 0) + 1
            # each draw stands in for an equal share of the leftover mass
            share = mass.sum() / remaining
            for mask in sorted(counts):
                masks.append(mask)
                weights.append(share * counts[mask])
        v = _coalition_values(predict, x, background, groups, masks)
        return _solve_constrained_wls(
            masks_to_Z(masks), np.asarray(weights), v - base, delta
        )

    try:
        phi = attempt(seed)
    except np.linalg.LinAlgError:
        try:
            phi = attempt(seed + 1)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                "coalition design remained degenerate after one resample"
            ) from None

    return Attribution(
        base_value=base,
        phi={name: float(phi[i]) for i, (name, _) in enumerate(groups)},
        model_output=fx,
        target_space=target_space,
    )


def background_sample(
    X: np.ndarray, y: np.ndarray | None, n: int = 100, seed: int = 0
) -> np.ndarray:
    """Label-stratified background rows for the value function."""
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if y is None or len(np.unique(y)) < 2:
        idx = rng.choice(X.shape[0], size=min(n, X.shape[0]), replace=False)
        return X[np.sort(idx)]
    y = np.asarray(y)
    picks = []
    for cls in np.unique(y):
        cls_idx = np.flatnonzero(y == cls)
        share = max(1, int(round(n * len(cls_idx) / len(y))))
        take = min(share, len(cls_idx))
        picks.append(rng.choice(cls_idx, size=take, replace=False))
    idx = np.sort(np.concatenate(picks))[:n]
    return X[idx]


def global_importance(attrs: list[Attribution]) -> list[tuple[str, float]]:
    """Features ranked by mean absolute contribution, ties by name."""
    if not attrs:
        raise ValueError("need at least one attribution")
    names = list(attrs[0].phi)
    for a in attrs[1:]:
        if list(a.phi) != names:
            raise ValueError("attributions carry inconsistent feature sets")
    means = {
        name: float(np.mean([abs(a.phi[name]) for a in attrs])) for name in names
    }
    return sorted(means.items(), key=lambda kv: (-kv[1], kv[0]))


def force_plot_export(attr: Attribution) -> dict:
    """Tug-of-war bar data: ordered by pull strength, signed toward the
    completed or non-completed outcome, with the base line and final value."""
    bars = []
    for name in sorted(attr.phi, key=lambda n: (-abs(attr.phi[n]), n)):
        phi = attr.phi[name]
        bars.append({
            "feature": name,
            "value_display": attr.feature_values.get(name, ""),
            "phi": phi,
            "direction": "completion" if phi >= 0 else "non_completion",
        })
    return {
        "base": attr.base_value,
        "final": attr.model_output,
        "target_space": attr.target_space,
        "bars": bars,
    }


def force_plot_to_json(doc: dict) -> str:
    return json.dumps(doc, indent=2)


def force_plot_from_json(text: str) -> dict:
    return json.loads(text)
