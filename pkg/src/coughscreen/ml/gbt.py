"""Second-order gradient-boosted regression trees for binary logistic loss.

Splits are found by exact greedy search over every distinct threshold. A
node with gradient sum ``G`` and hessian sum ``H`` scores ``G^2 / (H + lam)``;
the leaf weight is ``-G / (H + lam)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass
class Node:
    weight: float = 0.0
    feature: int = -1
    threshold: float = 0.0
    gain: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(self.left.depth(), self.right.depth())

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.is_leaf:
            return np.full(len(X), self.weight)
        out = np.empty(len(X))
        go_left = X[:, self.feature] < self.threshold
        out[go_left] = self.left.predict(X[go_left])
        out[~go_left] = self.right.predict(X[~go_left])
        return out

    def to_dict(self):
        if self.is_leaf:
            return {"leaf": self.weight}
        return {
            "feature": self.feature, "threshold": self.threshold, "gain": self.gain,
            "left": self.left.to_dict(), "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        if "leaf" in d:
            return cls(weight=float(d["leaf"]))
        return cls(
            feature=int(d["feature"]), threshold=float(d["threshold"]), gain=float(d["gain"]),
            left=cls.from_dict(d["left"]), right=cls.from_dict(d["right"]),
        )


def split_gain(GL, HL, GR, HR, lam, gamma):
    return 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - (GL + GR) ** 2 / (HL + HR + lam)) - gamma


def best_split(X, g, h, lam, gamma):
    """Best ``(gain, feature, threshold)`` over all features, or ``None``.

    Candidates are midpoints between consecutive distinct values; rows with
    ``x < threshold`` go left. The first strictly best candidate in
    (feature, threshold ascending) order wins.
    """
    G, H = g.sum(), h.sum()
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        gl = np.cumsum(g[order])[:-1]
        hl = np.cumsum(h[order])[:-1]
        distinct = xs[1:] > xs[:-1]
        if not distinct.any():
            continue
        gains = split_gain(gl, hl, G - gl, H - hl, lam, gamma)
        gains = np.where(distinct, gains, -np.inf)
        k = int(np.argmax(gains))
        if best is None or gains[k] > best[0]:
            best = (float(gains[k]), f, float((xs[k] + xs[k + 1]) / 2))
    return best


def build_tree(X, g, h, max_depth, lam, gamma, depth=0) -> Node:
    G, H = g.sum(), h.sum()
    leaf = Node(weight=float(-G / (H + lam)))
    if depth >= max_depth or len(g) < 2:
        return leaf
    split = best_split(X, g, h, lam, gamma)
    if split is None or not split[0] > 0:
        return leaf
    gain, f, thr = split
    mask = X[:, f] < thr
    return Node(
        weight=leaf.weight, feature=f, threshold=thr, gain=gain,
        left=build_tree(X[mask], g[mask], h[mask], max_depth, lam, gamma, depth + 1),
        right=build_tree(X[~mask], g[~mask], h[~mask], max_depth, lam, gamma, depth + 1),
    )


def logistic_loss(y, margin) -> float:
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


class GradientBoostedTrees:
    family = "gbt"

    def __init__(self, n_rounds: int = 100, max_depth: int = 3, learning_rate: float = 0.3, lam: float = 1.0, gamma: float = 0.0):
        self.n_rounds = n_rounds
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.lam = lam
        self.gamma = gamma
        self.trees: list[Node] = []
        self.train_loss_: list[float] = []

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be binary 0/1")
        margin = np.zeros(len(y))
        self.trees = []
        self.train_loss_ = [logistic_loss(y, margin)]
        for _ in range(self.n_rounds):
            p = expit(margin)
            g, h = p - y, p * (1 - p)
            tree = build_tree(X, g, h, self.max_depth, self.lam, self.gamma)
            self.trees.append(tree)
            margin = margin + self.learning_rate * tree.predict(X)
            self.train_loss_.append(logistic_loss(y, margin))
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        margin = np.zeros(len(X))
        for t in self.trees:
            margin += self.learning_rate * t.predict(X)
        return margin

    def predict_proba(self, X):
        return expit(self.decision_function(X))

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)

    def get_params(self):
        return {"n_rounds": self.n_rounds, "max_depth": self.max_depth, "learning_rate": self.learning_rate, "lam": self.lam, "gamma": self.gamma}

    def to_dict(self):
        return {**self.get_params(), "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        m = cls(d["n_rounds"], d["max_depth"], d["learning_rate"], d["lam"], d["gamma"])
        m.trees = [Node.from_dict(t) for t in d["trees"]]
        return m


def train_gbt(X, y, n_rounds=100, max_depth=3, learning_rate=0.3, lam=1.0, gamma=0.0) -> GradientBoostedTrees:
    return GradientBoostedTrees(n_rounds, max_depth, learning_rate, lam, gamma).fit(X, y)
