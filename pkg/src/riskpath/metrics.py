"""Classification metrics reported in percent, with grouped CV aggregation."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.stats import rankdata

from .dataset import grouped_folds


@dataclass
class Metrics:
    """Point values are percentages; std fields hold fold dispersion and are
    zero for a single evaluation. ``auc`` is None when the test fold carries
    one class only (the other metrics are still meaningful)."""

    f1: float
    accuracy: float
    auc: float | None
    recall: float
    precision: float
    f1_std: float = 0.0
    accuracy_std: float = 0.0
    auc_std: float = 0.0
    recall_std: float = 0.0
    precision_std: float = 0.0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def roc_auc(y_true: np.ndarray, scores: np.ndarray) -> float | None:
    """Rank-statistic AUC with average ranks on ties.

    Returns None when only one class is present, which leaves the statistic
    undefined.
    """
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int((y_true == 1).sum())
    n_neg = int((y_true == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    pos_rank_sum = ranks[y_true == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def binary_metrics(y_true: np.ndarray, scores: np.ndarray, threshold: float = 0.5) -> Metrics:
    """Score a batch of probability-like predictions against binary labels.

    Labels are ``scores >= threshold``. Precision and recall fall back to 0
    on empty denominators, and F1 is their harmonic mean (0 when both are 0).
    """
    y_true = np.asarray(y_true).astype(np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if y_true.size == 0:
        raise ValueError("empty test set")
    pred = (scores >= threshold).astype(np.int64)

    tp = int(((pred == 1) & (y_true == 1)).sum())
    fp = int(((pred == 1) & (y_true == 0)).sum())
    fn = int(((pred == 0) & (y_true == 1)).sum())

    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    accuracy = float((pred == y_true).mean())
    auc = roc_auc(y_true, scores)

    return Metrics(
        f1=100 * f1,
        accuracy=100 * accuracy,
        auc=None if auc is None else 100 * auc,
        recall=100 * recall,
        precision=100 * precision,
    )


def evaluate(model, X_test: np.ndarray, y_test: np.ndarray, threshold: float = 0.5) -> Metrics:
    return binary_metrics(y_test, model.predict_proba(X_test), threshold)


def aggregate_metrics(folds: list[Metrics]) -> Metrics:
    """Mean and standard deviation of per-fold metrics. Folds with an
    undefined AUC are left out of the AUC aggregate."""
    if not folds:
        raise ValueError("no fold metrics to aggregate")

    def stat(name):
        vals = [getattr(m, name) for m in folds]
        if name == "auc":
            vals = [v for v in vals if v is not None]
            if not vals:
                return None, 0.0
        arr = np.asarray(vals, dtype=np.float64)
        return float(arr.mean()), float(arr.std())

    f1, f1_s = stat("f1")
    acc, acc_s = stat("accuracy")
    auc, auc_s = stat("auc")
    rec, rec_s = stat("recall")
    prec, prec_s = stat("precision")
    return Metrics(
        f1=f1, accuracy=acc, auc=auc, recall=rec, precision=prec,
        f1_std=f1_s, accuracy_std=acc_s, auc_std=auc_s, recall_std=rec_s,
        precision_std=prec_s,
    )


def cross_validate(
    model_factory,
    X: np.ndarray,
    y: np.ndarray,
    groups,
    k: int,
    seed: int,
) -> tuple[Metrics, list[Metrics]]:
    """Grouped k-fold evaluation: ``model_factory(X_train, y_train, fold_seed)``
    must return a fitted model with ``predict_proba``."""
    fold_metrics = []
    seq = np.random.SeedSequence([seed, k])
    fold_seeds = seq.generate_state(k)
    for fold_idx, (train_idx, test_idx) in enumerate(grouped_folds(groups, k, seed)):
        model = model_factory(X[train_idx], y[train_idx], int(fold_seeds[fold_idx]))
        fold_metrics.append(evaluate(model, X[test_idx], y[test_idx]))
    return aggregate_metrics(fold_metrics), fold_metrics
