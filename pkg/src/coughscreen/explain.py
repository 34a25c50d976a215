"""Kernel SHAP for black-box prediction functions.

Absent features take background values and the model output is averaged
over the background rows. Shapley values are the solution of a weighted
least-squares fit over coalitions with the Shapley kernel as weights, with
the empty and full coalitions imposed as exact constraints.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

EXACT_MAX_FEATURES = 12
EVAL_CHUNK_ROWS = 50_000


class ShapError(ValueError):
    pass


@dataclass(frozen=True)
class ShapExplanation:
    base_value: float
    phi: np.ndarray
    x: np.ndarray
    output: float

    def local_accuracy_gap(self) -> float:
        return abs(self.base_value + float(self.phi.sum()) - self.output)


def shapley_kernel_weight(d: int, size: int) -> float:
    if size == 0 or size == d:
        return math.inf
    return (d - 1) / (math.comb(d, size) * size * (d - size))


def all_coalitions(d: int) -> np.ndarray:
    """Every mask except the empty and the full coalition."""
    masks = [m for s in range(1, d) for m in itertools.combinations(range(d), s)]
    Z = np.zeros((len(masks), d), dtype=bool)
    for r, m in enumerate(masks):
        Z[r, list(m)] = True
    return Z


def sample_coalitions(d: int, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` masks (complement-paired), sizes proportional to the kernel mass per size.

    Returns unique masks and their draw counts, which act as regression weights.
    """
    sizes = np.arange(1, d)
    size_mass = (d - 1) / (sizes * (d - sizes))
    size_p = size_mass / size_mass.sum()
    counts: dict[bytes, int] = {}
    rows: dict[bytes, np.ndarray] = {}
    for _ in range(max(1, n // 2)):
        s = rng.choice(sizes, p=size_p)
        z = np.zeros(d, dtype=bool)
        z[rng.choice(d, size=s, replace=False)] = True
        for mask in (z, ~z):
            key = mask.tobytes()
            counts[key] = counts.get(key, 0) + 1
            rows.setdefault(key, mask)
    keys = list(rows)
    return np.array([rows[k] for k in keys]), np.array([counts[k] for k in keys], dtype=np.float64)


def _evaluate(model, X: np.ndarray) -> np.ndarray:
    out = [np.asarray(model(X[i : i + EVAL_CHUNK_ROWS]), dtype=np.float64).ravel() for i in range(0, len(X), EVAL_CHUNK_ROWS)]
    return np.concatenate(out)


def coalition_values(model, x, background, Z) -> np.ndarray:
    """Mean model output with coalition features from ``x`` and the rest from each background row."""
    m, d = background.shape
    values = np.empty(len(Z))
    per_chunk = max(1, EVAL_CHUNK_ROWS // m)
    for start in range(0, len(Z), per_chunk):
        z = Z[start : start + per_chunk]
        X = np.where(z[:, None, :], x[None, None, :], background[None, :, :]).reshape(-1, d)
        values[start : start + len(z)] = _evaluate(model, X).reshape(len(z), m).mean(axis=1)
    return values


def solve_constrained_wls(Z, values, weights, base, full) -> np.ndarray:
    """Weighted least squares for ``phi`` subject to ``sum(phi) == full - base``."""
    Z = Z.astype(np.float64)
    d = Z.shape[1]
    total = full - base
    if d == 1:
        return np.array([total])
    # eliminate the last coordinate through the sum constraint
    A = Z[:, :-1] - Z[:, -1:]
    r = values - base - Z[:, -1] * total
    sw = np.sqrt(weights)
    coef, _, rank, _ = np.linalg.lstsq(A * sw[:, None], r * sw, rcond=None)
    if rank < d - 1:
        raise ShapError(f"coalition system is rank deficient ({rank} < {d - 1}); draw more coalitions")
    return np.append(coef, total - coef.sum())


def kernel_shap(model, x, background, n_coalitions: int | None = None, seed: int = 0, exact: bool | None = None) -> ShapExplanation:
    """Explain ``model(x)`` relative to the mean output over ``background``.

    ``model`` maps an (n, d) array to n outputs. With ``d <= 12`` (or a budget
    covering every coalition) all ``2**d - 2`` proper coalitions are
    enumerated and the result equals the exact Shapley values.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    d = len(x)
    if background.shape[0] == 0:
        raise ShapError("background set is empty")
    if background.shape[1] != d:
        raise ShapError(f"background has {background.shape[1]} features, x has {d}")
    n_coalitions = n_coalitions if n_coalitions is not None else 2 * d + 2048
    if n_coalitions < 2 * d:
        raise ShapError(f"need at least 2*d = {2 * d} coalitions, got {n_coalitions}")

    base = float(_evaluate(model, background).mean())
    full = float(_evaluate(model, x[None, :])[0])
    if d == 1:
        return ShapExplanation(base, np.array([full - base]), x, full)

    if exact is None:
        exact = d <= EXACT_MAX_FEATURES
    if exact or n_coalitions >= 2**d - 2:
        Z = all_coalitions(d)
        sizes = Z.sum(axis=1)
        weights = np.array([shapley_kernel_weight(d, int(s)) for s in sizes])
    else:
        Z, weights = sample_coalitions(d, n_coalitions, np.random.default_rng(seed))

    values = coalition_values(model, x, background, Z)
    phi = solve_constrained_wls(Z, values, weights, base, full)
    return ShapExplanation(base, phi, x, full)


@dataclass
class ShapSummary:
    feature_names: list[str]
    mean_abs_phi: np.ndarray
    order: list[int]  # feature indices, most important first
    phi: np.ndarray  # (n_instances, d)
    values: np.ndarray  # (n_instances, d)

    def ranked(self) -> list[tuple[str, float]]:
        return [(self.feature_names[i], float(self.mean_abs_phi[i])) for i in self.order]


def shap_summary(explanations, feature_names=None) -> ShapSummary:
    if not explanations:
        raise ShapError("need at least one explanation")
    d = len(explanations[0].phi)
    if any(len(e.phi) != d or len(e.x) != d for e in explanations):
        raise ShapError("explanations have inconsistent feature counts")
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(d)]
    if len(names) != d:
        raise ShapError("feature_names length does not match the explanations")
    phi = np.array([e.phi for e in explanations])
    vals = np.array([e.x for e in explanations])
    importance = np.abs(phi).mean(axis=0)
    order = sorted(range(d), key=lambda i: (-importance[i], i))
    return ShapSummary(names, importance, order, phi, vals)


def write_shap_table(path, explanations, feature_names, instance_ids=None) -> None:
    ids = instance_ids if instance_ids is not None else range(len(explanations))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "feature", "phi", "feature_value"])
        for iid, e in zip(ids, explanations):
            for name, p, v in zip(feature_names, e.phi, e.x):
                writer.writerow([iid, name, repr(float(p)), repr(float(v))])


def read_shap_table(path):
    """Returns ``(instance_ids, feature_names, phi, values)`` from a SHAP CSV."""
    rows = []
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ids = list(dict.fromkeys(r["instance_id"] for r in rows))
    names = list(dict.fromkeys(r["feature"] for r in rows))
    phi = np.zeros((len(ids), len(names)))
    vals = np.zeros((len(ids), len(names)))
    ii = {k: i for i, k in enumerate(ids)}
    fi = {k: i for i, k in enumerate(names)}
    for r in rows:
        phi[ii[r["instance_id"]], fi[r["feature"]]] = float(r["phi"])
        vals[ii[r["instance_id"]], fi[r["feature"]]] = float(r["feature_value"])
    return ids, names, phi, vals
