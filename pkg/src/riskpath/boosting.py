"""Gradient-boosted classification trees, trained from scratch.

Standard logistic-loss boosting: each round fits a least-squares regression
tree to the negative gradient of the log-loss (label minus predicted
probability) over a per-tree row subsample, with Newton leaf values. The
ensemble margin is ``base_score + learning_rate * sum(leaf values)`` and the
class probability is its sigmoid. Split search is exact greedy over sorted
unique values with deterministic tie-breaking, so a fixed seed reproduces
the ensemble bit for bit.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

MODEL_MAGIC = "riskpath-model"
MODEL_FORMAT = 1


class PersistenceError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    n_estimators: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    subsample: float = 0.85
    min_samples_leaf: float = 1
    min_samples_split: float = 2


@dataclass
class TreeNode:
    """Either an internal split (column, threshold, children) or a leaf."""

    column: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.value is not None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": self.value}
        return {
            "column": self.column,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "value" in d:
            return cls(value=float(d["value"]))
        return cls(
            column=int(d["column"]),
            threshold=float(d["threshold"]),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )

    def leaf_value(self, row: np.ndarray) -> float:
        node = self
        while not node.is_leaf:
            node = node.left if row[node.column] <= node.threshold else node.right
        return node.value

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.float64)
        self._predict_into(X, np.arange(X.shape[0]), out)
        return out

    def _predict_into(self, X, idx, out):
        if self.is_leaf:
            out[idx] = self.value
            return
        go_left = X[idx, self.column] <= self.threshold
        self.left._predict_into(X, idx[go_left], out)
        self.right._predict_into(X, idx[~go_left], out)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=np.float64)))


def _resolve_count(value, n: int, minimum: int) -> int:
    # float values are fractions of the training-set size, as in sklearn
    if isinstance(value, float) and 0.0 < value < 1.0:
        return max(minimum, int(np.ceil(value * n)))
    return max(minimum, int(value))


def _best_split(X, g, idx, columns, min_leaf):
    """Exact greedy split on the gradient vector.

    Gain is the least-squares improvement of splitting, evaluated between
    consecutive sorted unique values. Ties resolve to the lowest column
    index, then the lowest threshold.
    """
    g_sub = g[idx]
    total = g_sub.sum()
    n = len(idx)
    parent = total * total / n
    best = None  # (gain, column, threshold)
    for col in columns:
        xs = X[idx, col]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        gs_sorted = g_sub[order]
        csum = np.cumsum(gs_sorted)
        # split after position i keeps i+1 rows on the left
        boundaries = np.flatnonzero(xs_sorted[:-1] < xs_sorted[1:])
        for i in boundaries:
            n_left = i + 1
            n_right = n - n_left
            if n_left < min_leaf or n_right < min_leaf:
                continue
            left_sum = csum[i]
            right_sum = total - left_sum
            gain = left_sum * left_sum / n_left + right_sum * right_sum / n_right - parent
            thr = 0.5 * (xs_sorted[i] + xs_sorted[i + 1])
            if best is None or gain > best[0] + 1e-15:
                best = (gain, col, thr)
    return best


def _build_tree(X, g, h, idx, depth, hp: Hyperparams, min_split, min_leaf) -> TreeNode:
    def leaf() -> TreeNode:
        denom = h[idx].sum()
        value = g[idx].sum() / denom if denom > 1e-12 else 0.0
        return TreeNode(value=float(value))

    if depth >= hp.max_depth or len(idx) < min_split:
        return leaf()
    split = _best_split(X, g, idx, range(X.shape[1]), min_leaf)
    if split is None or split[0] <= 1e-12:
        return leaf()
    _, col, thr = split
    go_left = X[idx, col] <= thr
    return TreeNode(
        column=int(col),
        threshold=float(thr),
        left=_build_tree(X, g, h, idx[go_left], depth + 1, hp, min_split, min_leaf),
        right=_build_tree(X, g, h, idx[~go_left], depth + 1, hp, min_split, min_leaf),
    )


@dataclass
class TreeEnsemble:
    trees: list[TreeNode]
    learning_rate: float
    base_score: float  # log-odds of the training prevalence
    feature_names: list[str]
    metadata: dict = field(default_factory=dict)

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"row width {X.shape[1]} does not match training width "
                f"{len(self.feature_names)}"
            )
        margin = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            margin += self.learning_rate * tree.predict(X)
        return margin

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Probability of the positive (completed) class. The displayed
        non-completion risk is one minus this value."""
        return sigmoid(self.predict_margin(X))

    def predict_proba_row(self, row: np.ndarray) -> float:
        return float(self.predict_proba(np.asarray(row)[None, :])[0])


def train_gbm(
    X: np.ndarray,
    y: np.ndarray,
    hp: Hyperparams,
    seed: int,
    feature_names: list[str] | None = None,
) -> TreeEnsemble:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("training data holds a single class; nothing to fit")
    if not set(classes.tolist()) <= {0.0, 1.0}:
        raise ValueError("labels must be binary 0/1")
    n = X.shape[0]
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(X.shape[1])]

    p0 = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    base = float(np.log(p0 / (1 - p0)))
    margin = np.full(n, base, dtype=np.float64)
    min_split = _resolve_count(hp.min_samples_split, n, 2)
    min_leaf = _resolve_count(hp.min_samples_leaf, n, 1)

    trees: list[TreeNode] = []
    seq = np.random.SeedSequence([seed])
    tree_seeds = seq.spawn(hp.n_estimators)
    for t in range(hp.n_estimators):
        rng = np.random.default_rng(tree_seeds[t])
        if hp.subsample < 1.0:
            size = max(min_split, int(round(hp.subsample * n)))
            idx = np.sort(rng.choice(n, size=size, replace=False))
        else:
            idx = np.arange(n)
        p = sigmoid(margin)
        g = y - p  # negative gradient of the log-loss
        h = p * (1 - p)
        tree = _build_tree(X, g, h, idx, 0, hp, min_split, min_leaf)
        margin += hp.learning_rate * tree.predict(X)
        trees.append(tree)

    return TreeEnsemble(
        trees=trees,
        learning_rate=hp.learning_rate,
        base_score=base,
        feature_names=list(feature_names),
        metadata={"seed": seed, "hyperparams": asdict(hp), "n_rows": n},
    )


@dataclass
class BaselineModel:
    """Reference models: 'mode' always predicts the majority class, while
    'stratified' guesses positive with probability equal to the training
    prevalence."""

    strategy: str  # "mode" | "stratified"
    prevalence: float
    seed: int = 0

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        n = X.shape[0]
        if self.strategy == "mode":
            return np.full(n, self.prevalence, dtype=np.float64)
        # content-derived stream keeps repeated evaluation deterministic
        digest = zlib.crc32(np.ascontiguousarray(X).tobytes())
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, digest]))
        labels = rng.random(n) < self.prevalence
        return labels.astype(np.float64)

    def predict_proba_row(self, row: np.ndarray) -> float:
        return float(self.predict_proba(np.asarray(row)[None, :])[0])


def train_baseline(kind: str, y: np.ndarray, seed: int = 0) -> BaselineModel:
    if kind not in ("mode", "stratified"):
        raise ValueError(f"unknown baseline kind {kind!r}")
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("labels are required")
    return BaselineModel(strategy=kind, prevalence=float(y.mean()), seed=seed)


def save_model(model, path: str | Path) -> None:
    if isinstance(model, TreeEnsemble):
        doc = {
            "magic": MODEL_MAGIC,
            "format": MODEL_FORMAT,
            "kind": "gbm",
            "feature_names": model.feature_names,
            "learning_rate": model.learning_rate,
            "base_score": model.base_score,
            "metadata": model.metadata,
            "trees": [t.to_dict() for t in model.trees],
        }
    elif isinstance(model, BaselineModel):
        doc = {
            "magic": MODEL_MAGIC,
            "format": MODEL_FORMAT,
            "kind": "baseline",
            "strategy": model.strategy,
            "prevalence": model.prevalence,
            "seed": model.seed,
        }
    else:
        raise PersistenceError(f"cannot persist {type(model).__name__}")
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: str | Path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PersistenceError(f"{path} is not a model file: {exc}") from exc
    if doc.get("magic") != MODEL_MAGIC:
        raise PersistenceError(f"{path} lacks the model magic header")
    if doc.get("format") != MODEL_FORMAT:
        raise PersistenceError(
            f"{path}: unsupported model format {doc.get('format')!r}"
        )
    if doc["kind"] == "gbm":
        return TreeEnsemble(
            trees=[TreeNode.from_dict(t) for t in doc["trees"]],
            learning_rate=float(doc["learning_rate"]),
            base_score=float(doc["base_score"]),
            feature_names=list(doc["feature_names"]),
            metadata=doc.get("metadata", {}),
        )
    if doc["kind"] == "baseline":
        return BaselineModel(
            strategy=doc["strategy"],
            prevalence=float(doc["prevalence"]),
            seed=int(doc["seed"]),
        )
    raise PersistenceError(f"unknown model kind {doc['kind']!r}")
