from __future__ import annotations

import numpy as np

STD_FLOOR = 1e-12


class StandardScaler:
    """Per-column z-scoring; fit only on training rows."""

    def __init__(self, mean=None, std=None):
        self.mean_ = None if mean is None else np.asarray(mean, dtype=np.float64)
        self.std_ = None if std is None else np.asarray(std, dtype=np.float64)

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        self.std_ = np.maximum(X.std(axis=0), STD_FLOOR)
        return self

    def transform(self, X):
        if self.mean_ is None:
            raise RuntimeError("scaler is not fitted")
        return (np.asarray(X, dtype=np.float64) - self.mean_) / self.std_

    def fit_transform(self, X):
        return self.fit(X).transform(X)

    def to_dict(self):
        return {"mean": self.mean_.tolist(), "std": self.std_.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mean"], d["std"])
