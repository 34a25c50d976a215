"""L2-regularised logistic regression fitted by gradient descent."""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def _check(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) and y must be (n,)")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    return X, y


def logistic_loss_and_grad(w, b, X, y, l2):
    """Mean binary cross-entropy plus ``l2 * |w|^2 / 2``; the bias is not penalised."""
    z = X @ w + b
    # log(1 + e^z) - y z, written to stay finite for large |z|
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))
    r = (expit(z) - y) / len(y)
    return loss, X.T @ r + l2 * w, float(r.sum())


class LogisticRegression:
    family = "lr"

    def __init__(self, l2: float = 0.01, tol: float = 1e-6, max_iter: int = 10_000):
        self.l2 = l2
        self.tol = tol
        self.max_iter = max_iter
        self.coef_ = None
        self.intercept_ = 0.0
        self.loss_history_: list[float] = []

    def fit(self, X, y):
        X, y = _check(X, y)
        w = np.zeros(X.shape[1])
        b = 0.0
        loss, gw, gb = logistic_loss_and_grad(w, b, X, y, self.l2)
        history = [loss]
        step = 1.0
        for _ in range(self.max_iter):
            gnorm2 = float(gw @ gw + gb * gb)
            if max(np.max(np.abs(gw), initial=0.0), abs(gb)) < self.tol:
                break
            step *= 2.0
            # Armijo backtracking
            while True:
                w_new, b_new = w - step * gw, b - step * gb
                new_loss, new_gw, new_gb = logistic_loss_and_grad(w_new, b_new, X, y, self.l2)
                if new_loss <= loss - 1e-4 * step * gnorm2 or step < 1e-16:
                    break
                step *= 0.5
            if new_loss > loss:
                break
            w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
            history.append(loss)
        self.coef_, self.intercept_ = w, b
        self.loss_history_ = history
        return self

    def decision_function(self, X):
        return np.asarray(X, dtype=np.float64) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        return expit(self.decision_function(X))

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)

    def get_params(self):
        return {"l2": self.l2}

    def to_dict(self):
        return {"l2": self.l2, "coef": self.coef_.tolist(), "intercept": self.intercept_}

    @classmethod
    def from_dict(cls, d):
        m = cls(l2=d["l2"])
        m.coef_ = np.asarray(d["coef"], dtype=np.float64)
        m.intercept_ = float(d["intercept"])
        return m


def train_logistic_regression(X, y, l2: float = 0.01) -> LogisticRegression:
    return LogisticRegression(l2=l2).fit(X, y)
