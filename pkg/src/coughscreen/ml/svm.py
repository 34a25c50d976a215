"""Soft-margin SVM trained with sequential minimal optimisation.

Working pairs are chosen by maximal KKT violation; the update step and the
box clipping follow the usual two-variable analytic solution.
"""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)

TAU = 1e-12


def kernel_matrix(A, B, kernel: str, gamma: float | None = None) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        if gamma is None:
            raise ValueError("rbf kernel needs gamma")
        sq = np.sum(A**2, axis=1)[:, None] + np.sum(B**2, axis=1)[None, :] - 2 * A @ B.T
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError(f"unknown kernel {kernel!r}")


def dual_objective(alpha, y, K) -> float:
    """``sum(alpha) - 0.5 * alpha^T Q alpha`` with ``Q_ij = y_i y_j K_ij`` (maximised)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def smo_solve(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3, max_iter: int = 200_000):
    """Solve the SVM dual for labels ``y`` in {-1, +1}.

    Returns ``(alpha, b, n_iter)``.
    """
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    QD = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    it = 0
    while it < max_iter:
        score = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        if score[i] - score[j] < tol:
            break
        it += 1

        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2 * Q[i, j]
            delta = (-G[i] - G[j]) / max(quad, TAU)
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = QD[i] + QD[j] - 2 * Q[i, j]
            delta = (G[i] - G[j]) / max(quad, TAU)
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total

        G += Q[:, i] * (ni - ai) + Q[:, j] * (nj - aj)
        alpha[i], alpha[j] = ni, nj
    else:
        log.warning("SMO stopped at max_iter=%d before reaching tolerance", max_iter)

    score = -y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        b = float(score[free].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = score[up].max() if up.any() else score.max()
        lo = score[low].min() if low.any() else score.min()
        b = float((hi + lo) / 2)
    return alpha, b, it


class SVM:
    """Binary SVM; ``fit`` takes 0/1 labels and maps them to -1/+1."""

    family = "svm"

    def __init__(self, C: float = 1.0, kernel: str = "rbf", gamma: float | str | None = "1/d", tol: float = 1e-3):
        self.C = C
        self.kernel = kernel
        self.gamma = gamma
        self.tol = tol
        self.support_vectors_ = None
        self.dual_coef_ = None  # alpha_i * y_i for the support vectors
        self.alpha_ = None
        self.intercept_ = 0.0
        self.gamma_ = None

    def _resolve_gamma(self, d):
        if self.kernel != "rbf":
            return None
        if isinstance(self.gamma, str):
            return 1.0 / d
        return float(self.gamma)

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        labels = np.unique(y)
        if len(labels) < 2:
            raise ValueError("SVM training needs both classes")
        if not set(labels.tolist()) <= {0, 1, -1}:
            raise ValueError("labels must be 0/1 or -1/+1")
        ys = np.where(y > 0, 1.0, -1.0)
        if self.C <= 0:
            raise ValueError("C must be positive")
        self.gamma_ = self._resolve_gamma(X.shape[1])
        K = kernel_matrix(X, X, self.kernel, self.gamma_)
        alpha, b, self.n_iter_ = smo_solve(K, ys, self.C, self.tol)
        self.alpha_ = alpha
        sv = alpha > 0
        self.support_vectors_ = X[sv]
        self.dual_coef_ = (alpha * ys)[sv]
        self.intercept_ = b
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        if len(self.dual_coef_) == 0:
            return np.full(len(X), self.intercept_)
        return kernel_matrix(X, self.support_vectors_, self.kernel, self.gamma_) @ self.dual_coef_ + self.intercept_

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)

    def get_params(self):
        return {"C": self.C, "kernel": self.kernel, "gamma": self.gamma}

    def to_dict(self):
        return {
            "C": self.C, "kernel": self.kernel, "gamma": self.gamma, "gamma_resolved": self.gamma_,
            "support_vectors": self.support_vectors_.tolist(), "dual_coef": self.dual_coef_.tolist(),
            "intercept": self.intercept_,
        }

    @classmethod
    def from_dict(cls, d):
        m = cls(C=d["C"], kernel=d["kernel"], gamma=d["gamma"])
        m.gamma_ = d["gamma_resolved"]
        m.support_vectors_ = np.asarray(d["support_vectors"], dtype=np.float64).reshape(len(d["dual_coef"]), -1)
        m.dual_coef_ = np.asarray(d["dual_coef"], dtype=np.float64)
        m.intercept_ = float(d["intercept"])
        return m


def train_svm_smo(X, y, kernel: str = "rbf", C: float = 1.0, gamma=None) -> SVM:
    return SVM(C=C, kernel=kernel, gamma=gamma if gamma is not None else "1/d").fit(X, y)
