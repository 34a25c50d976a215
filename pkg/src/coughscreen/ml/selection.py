"""Grouped stratified folds, grid search and model persistence."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .gbt import GradientBoostedTrees
from .linear import LogisticRegression
from .scaler import StandardScaler
from .svm import SVM

FAMILIES = {"svm": SVM, "lr": LogisticRegression, "gbt": GradientBoostedTrees}

DEFAULT_GRIDS = {
    "svm": (
        [{"kernel": "linear", "C": c} for c in (0.1, 1.0, 10.0, 100.0)]
        + [{"kernel": "rbf", "C": c, "gamma": g} for c in (0.1, 1.0, 10.0, 100.0) for g in (0.001, 0.01, 0.1, "1/d")]
    ),
    "lr": [{"l2": v} for v in (0.001, 0.01, 0.1, 1.0)],
    "gbt": [
        {"n_rounds": r, "max_depth": d, "learning_rate": lr, "lam": 1.0, "gamma": 0.0}
        for r, d, lr in itertools.product((50, 100), (2, 3), (0.1, 0.3))
    ],
}


class FoldError(ValueError):
    pass


def stratified_kfold(y, k: int = 5, seed: int = 0, groups=None) -> np.ndarray:
    """Fold index per sample.

    Groups (subjects) are shuffled within each class and dealt round-robin,
    so every group lands in one fold and per-class group counts per fold
    differ by at most one. The dealing position carries over between classes
    to keep fold sizes balanced.
    """
    y = np.asarray(y)
    groups = np.arange(len(y)) if groups is None else np.asarray(groups)
    if len(groups) != len(y):
        raise FoldError("groups and y differ in length")
    group_label = {}
    for g, label in zip(groups.tolist(), y.tolist()):
        if group_label.setdefault(g, label) != label:
            raise FoldError(f"group {g!r} mixes labels")
    rng = np.random.default_rng(seed)
    fold_of = {}
    offset = 0
    for label in sorted(set(group_label.values())):
        members = sorted(g for g, lab in group_label.items() if lab == label)
        if len(members) < k:
            raise FoldError(f"class {label!r} has {len(members)} groups, fewer than k={k}")
        for pos, idx in enumerate(rng.permutation(len(members))):
            fold_of[members[idx]] = (offset + pos) % k
        offset = (offset + len(members)) % k
    return np.array([fold_of[g] for g in groups.tolist()], dtype=int)


@dataclass
class FittedModel:
    """A scaler plus an estimator, both fitted on the same training rows."""

    family: str
    params: dict
    scaler: StandardScaler
    estimator: object
    feature_names: list[str] = field(default_factory=list)

    def decision_function(self, X):
        return self.estimator.decision_function(self.scaler.transform(X))

    def predict(self, X):
        return self.estimator.predict(self.scaler.transform(X))

    def to_dict(self):
        return {
            "type": self.family,
            "params": self.params,
            "feature_names": list(self.feature_names),
            "scaler": self.scaler.to_dict(),
            "model": self.estimator.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        est = FAMILIES[d["type"]].from_dict(d["model"])
        return cls(d["type"], d["params"], StandardScaler.from_dict(d["scaler"]), est, d.get("feature_names", []))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_model(family: str, params: dict, X, y, feature_names=()) -> FittedModel:
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}")
    scaler = StandardScaler().fit(X)
    est = FAMILIES[family](**params).fit(scaler.transform(X), y)
    return FittedModel(family, dict(params), scaler, est, list(feature_names))


@dataclass
class CvResult:
    params: dict
    fold_accuracies: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_accuracies))


@dataclass
class GridSearchResult:
    family: str
    results: list[CvResult]
    best_index: int
    model: FittedModel

    @property
    def best(self) -> CvResult:
        return self.results[self.best_index]


def cross_validate(family, params, X, y, folds) -> CvResult:
    accs = []
    for f in range(int(folds.max()) + 1):
        tr, va = folds != f, folds == f
        m = fit_model(family, params, X[tr], y[tr])
        accs.append(float(np.mean(m.predict(X[va]) == y[va])))
    return CvResult(dict(params), accs)


def grid_search_cv(family: str, grid, X, y, groups=None, k: int = 5, seed: int = 0, feature_names=()) -> GridSearchResult:
    """Evaluate every grid point on one shared fold assignment and refit the winner.

    Winner: highest mean accuracy, then lowest std, then earliest grid position.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(int)
    folds = stratified_kfold(y, k, seed, groups)
    results = [cross_validate(family, p, X, y, folds) for p in grid]
    best = min(range(len(results)), key=lambda i: (-results[i].mean, results[i].std, i))
    model = fit_model(family, grid[best], X, y, feature_names)
    return GridSearchResult(family, results, best, model)
