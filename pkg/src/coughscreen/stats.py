"""Group-comparison tests and collinearity screening."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import chi2, norm, rankdata

EXACT_MAX_N = 12


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str  # "mann_whitney" | "chi_square"
    exact: bool = False
    dof: int | None = None

    __test__ = False  # not a pytest class


@dataclass
class CorrelationReport:
    feature_names: list[str]
    matrix: np.ndarray
    removed: list[str] = field(default_factory=list)
    retained: list[str] = field(default_factory=list)
    constant: list[str] = field(default_factory=list)

    def retained_matrix(self) -> np.ndarray:
        idx = [self.feature_names.index(n) for n in self.retained]
        return self.matrix[np.ix_(idx, idx)]


# -- Mann-Whitney U ---------------------------------------------------------

@lru_cache(maxsize=None)
def _u_counts(m: int, n: int) -> tuple[int, ...]:
    """Number of rank arrangements giving each U in 0..m*n (no ties)."""
    if m == 0 or n == 0:
        return (1,)
    # U counts pairs (x_i > y_j); the largest element is either an x (adds n) or a y
    with_x = _u_counts(m - 1, n)
    with_y = _u_counts(m, n - 1)
    out = [0] * (m * n + 1)
    for u, c in enumerate(with_x):
        out[u + n] += c
    for u, c in enumerate(with_y):
        out[u] += c
    return tuple(out)


def exact_u_pvalue(u_min: float, nx: int, ny: int) -> float:
    counts = _u_counts(nx, ny)
    total = math.comb(nx + ny, nx)
    tail = sum(counts[: int(math.floor(u_min)) + 1])
    return min(1.0, 2.0 * tail / total)


def normal_u_pvalue(u_min: float, nx: int, ny: int, tie_term: float = 0.0) -> float:
    """Two-sided normal approximation with continuity and tie-variance corrections.

    ``tie_term`` is ``sum(t**3 - t)`` over tie groups of the pooled sample.
    """
    n = nx + ny
    mu = nx * ny / 2.0
    var = nx * ny / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return 1.0
    z = max(abs(u_min - mu) - 0.5, 0.0) / math.sqrt(var)
    return float(min(1.0, 2.0 * norm.sf(z)))


def mann_whitney_u(xs, ys, exact: bool | None = None) -> TestResult:
    """Two-sided Mann-Whitney U test; statistic is ``min(U_x, U_y)``.

    Exact enumeration is used for tie-free samples with ``nx + ny <= 12``
    unless ``exact`` forces one route.
    """
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    nx, ny = len(xs), len(ys)
    if nx == 0 or ny == 0:
        raise StatsError("both samples must be non-empty")
    ranks = rankdata(np.concatenate([xs, ys]))
    u_x = float(ranks[:nx].sum() - nx * (nx + 1) / 2)
    u = min(u_x, nx * ny - u_x)
    _, tie_sizes = np.unique(ranks, return_counts=True)
    has_ties = bool(np.any(tie_sizes > 1))
    if exact is None:
        exact = not has_ties and nx + ny <= EXACT_MAX_N
    if exact:
        if has_ties:
            raise StatsError("exact distribution assumes no ties")
        p = exact_u_pvalue(u, nx, ny)
    else:
        tie_term = float(np.sum(tie_sizes.astype(np.float64) ** 3 - tie_sizes))
        p = normal_u_pvalue(u, nx, ny, tie_term)
    return TestResult(u, p, "mann_whitney", exact=exact)


# -- chi-squared ------------------------------------------------------------

def chi_square(table) -> TestResult:
    """Pearson chi-squared test of independence on an r x c table (no Yates correction)."""
    obs = np.asarray(table, dtype=np.float64)
    if obs.ndim != 2 or min(obs.shape) < 2:
        raise StatsError("need at least a 2x2 contingency table")
    if np.any(obs < 0):
        raise StatsError("counts must be non-negative")
    rows, cols = obs.sum(axis=1), obs.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise StatsError("every row and column total must be positive")
    expected = np.outer(rows, cols) / obs.sum()
    stat = float(np.sum((obs - expected) ** 2 / expected))
    dof = (obs.shape[0] - 1) * (obs.shape[1] - 1)
    return TestResult(stat, float(chi2.sf(stat, dof)), "chi_square", dof=dof)


def chi_square_2x2(a, b, c, d) -> TestResult:
    return chi_square([[a, b], [c, d]])


# -- correlation ------------------------------------------------------------

def pearson_matrix(features, names=None) -> CorrelationReport:
    """Pairwise Pearson r over columns; constant columns get r = 0 off the diagonal."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise StatsError("need at least two rows")
    names = list(names) if names is not None else [f"f{i}" for i in range(X.shape[1])]
    centred = X - X.mean(axis=0)
    norms = np.sqrt(np.sum(centred**2, axis=0))
    constant = norms <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0))
    safe = np.where(constant, 1.0, norms)
    unit = centred / safe
    unit[:, constant] = 0.0
    r = np.clip(unit.T @ unit, -1.0, 1.0)
    r = (r + r.T) / 2
    np.fill_diagonal(r, 1.0)
    return CorrelationReport(names, r, [], list(names), [n for n, c in zip(names, constant) if c])


def prune_collinear(report: CorrelationReport, threshold: float = 0.8) -> CorrelationReport:
    """Greedy removal of collinear features.

    Pairs are visited in schema order. For each pair still retained with
    ``|r| > threshold`` the member with the larger mean absolute correlation
    to the other retained features is dropped (the later one on ties).
    """
    names = report.feature_names
    a = np.abs(report.matrix)
    keep = np.ones(len(names), dtype=bool)

    def mean_abs(i):
        others = keep.copy()
        others[i] = False
        return float(a[i, others].mean()) if others.any() else 0.0

    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            if not keep[i]:
                break
            if keep[j] and a[i, j] > threshold:
                mi, mj = mean_abs(i), mean_abs(j)
                keep[i if mi > mj else j] = False
    return CorrelationReport(
        list(names),
        report.matrix,
        [n for n, k in zip(names, keep) if not k],
        [n for n, k in zip(names, keep) if k],
        list(report.constant),
    )


# -- reports ----------------------------------------------------------------

def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def feature_tests(X, y, names) -> list[tuple[str, TestResult]]:
    """Mann-Whitney per column, healthy (y=0) vs cancer (y=1)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    return [(n, mann_whitney_u(X[y == 0, k], X[y == 1, k])) for k, n in enumerate(names)]


def write_stats_report(path, results) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "U", "p_value", "significance"])
        for name, res in results:
            writer.writerow([name, repr(float(res.statistic)), repr(float(res.p_value)), significance_stars(res.p_value)])


def read_stats_report(path) -> list[tuple[str, float, float, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [(r["feature"], float(r["U"]), float(r["p_value"]), r["significance"]) for r in reader]


def write_correlation_report(path, report: CorrelationReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "status", *report.feature_names])
        removed = set(report.removed)
        for name, row in zip(report.feature_names, report.matrix):
            writer.writerow([name, "removed" if name in removed else "retained", *(f"{v:.6f}" for v in row)])
