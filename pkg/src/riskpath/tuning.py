"""Random search over hyperparameter grids with grouped cross-validation.

Configurations are sampled uniformly from per-parameter candidate lists,
selected by mean F1 over the tuning folds, and the winner is re-scored on a
fresh set of folds for the reported generalisation estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .boosting import Hyperparams, train_gbm
from .metrics import Metrics, cross_validate


def default_search_space() -> dict[str, list]:
    return {
        "n_estimators": [200, 350, 500],
        "max_depth": [3, 4, 5],
        "learning_rate": [0.05, 0.1, 0.2],
        "subsample": [0.7, 0.85, 1.0],
        "min_samples_split": [2, 0.25, 0.47],
        "min_samples_leaf": [1, 0.05, 0.115],
    }


@dataclass
class SearchResult:
    best: Hyperparams
    metrics: Metrics
    history: list[tuple[Hyperparams, float]]  # sampled config, mean tuning F1


def _sample_config(space: dict[str, list], rng: np.random.Generator) -> Hyperparams:
    hp = Hyperparams()
    picks = {}
    for name in sorted(space):
        values = space[name]
        picks[name] = values[int(rng.integers(len(values)))]
    return replace(hp, **picks)


def random_search_cv(
    X: np.ndarray,
    y: np.ndarray,
    groups,
    space: dict[str, list] | None = None,
    n_iter: int = 10,
    k_tune: int = 5,
    k_final: int = 10,
    seed: int = 0,
) -> SearchResult:
    """Tune by mean F1 over ``k_tune`` grouped folds, then report metrics
    from ``k_final`` fresh grouped folds. Ties keep the earliest sampled
    configuration so the result is seed-deterministic.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    if space is None:
        space = default_search_space()
    for name, values in space.items():
        if not values:
            raise ValueError(f"search space for {name!r} is empty")

    seq = np.random.SeedSequence([seed])
    sample_seed, tune_seed, final_seed = (int(s.generate_state(1)[0]) for s in seq.spawn(3))
    rng = np.random.default_rng(sample_seed)

    def factory_for(hp: Hyperparams):
        return lambda X_tr, y_tr, fold_seed: train_gbm(X_tr, y_tr, hp, fold_seed)

    history: list[tuple[Hyperparams, float]] = []
    best_hp, best_f1 = None, -np.inf
    for _ in range(n_iter):
        hp = _sample_config(space, rng)
        agg, _ = cross_validate(factory_for(hp), X, y, groups, k_tune, tune_seed)
        history.append((hp, agg.f1))
        if agg.f1 > best_f1:
            best_hp, best_f1 = hp, agg.f1

    final, _ = cross_validate(factory_for(best_hp), X, y, groups, k_final, final_seed)
    return SearchResult(best=best_hp, metrics=final, history=history)
