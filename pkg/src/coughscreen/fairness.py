"""Equalized-odds audit across two demographic groups."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

YOUNGER = "younger"
OLDER = "older"


class InsufficientSupportError(ValueError):
    pass


@dataclass(frozen=True)
class GroupRates:
    group: str
    tpr: float
    fpr: float
    n_positive: int
    n_negative: int


@dataclass(frozen=True)
class FairnessReport:
    attribute: str
    groups: tuple[GroupRates, GroupRates]
    eod_mean: float


def eod_mean_from_rates(tpr_a, tpr_b, fpr_a, fpr_b) -> float:
    """Mean of the absolute TPR gap and the absolute FPR gap."""
    return (abs(tpr_a - tpr_b) + abs(fpr_a - fpr_b)) / 2


def group_rates(y_true, y_pred, mask, name) -> GroupRates:
    yt, yp = y_true[mask], y_pred[mask]
    pos, neg = int(np.sum(yt == 1)), int(np.sum(yt == 0))
    if pos == 0 or neg == 0:
        missing = "positive" if pos == 0 else "negative"
        raise InsufficientSupportError(f"group {name!r} has no {missing} instances")
    tpr = float(np.sum((yp == 1) & (yt == 1)) / pos)
    fpr = float(np.sum((yp == 1) & (yt == 0)) / neg)
    return GroupRates(str(name), tpr, fpr, pos, neg)


def equalized_odds_difference_mean(y_true, y_pred, groups, attribute: str = "group") -> FairnessReport:
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    groups = np.asarray(groups)
    if not (len(y_true) == len(y_pred) == len(groups)):
        raise ValueError("y_true, y_pred and groups must have equal length")
    names = sorted(set(groups.tolist()), key=str)
    if len(names) != 2:
        raise ValueError(f"need exactly two groups, got {names}")
    a, b = (group_rates(y_true, y_pred, groups == g, g) for g in names)
    return FairnessReport(attribute, (a, b), eod_mean_from_rates(a.tpr, b.tpr, a.fpr, b.fpr))


def age_group(age_years, threshold_years: int = 58) -> str:
    """Ages at or above the threshold fall in the older group."""
    if age_years is None:
        raise ValueError("missing age")
    return OLDER if age_years >= threshold_years else YOUNGER


def stratify_age(records, threshold_years: int = 58) -> list[str]:
    out = []
    for r in records:
        try:
            out.append(age_group(r.age_years, threshold_years))
        except ValueError:
            raise ValueError(f"subject {r.subject_id!r} has no age") from None
    return out


def age_quartile(ages, q: float = 0.75) -> float:
    """Empirical quantile (linear interpolation), used to derive the age split."""
    return float(np.quantile(np.asarray(ages, dtype=np.float64), q))


def round_half_up(value: float, decimals: int = 2) -> float:
    """Report rounding: halves go up, after snapping away binary representation noise."""
    snapped = Decimal(repr(round(float(value), 10)))
    return float(snapped.quantize(Decimal(1).scaleb(-decimals), rounding=ROUND_HALF_UP))


def write_fairness_report(path, reports, decimals: int = 2, notes=(), model: str = "") -> None:
    """One row per group; values rounded only here, at emission.

    ``notes`` holds ``(attribute, reason)`` pairs for audits that could not
    be computed; they appear as rows with empty rates and a status message.
    """

    def fmt(v):
        return f"{round_half_up(v, decimals):.{decimals}f}"

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "attribute", "group", "TPR", "FPR", "n_positive", "n_negative", "eod_mean", "status"])
        for rep in reports:
            for g in rep.groups:
                writer.writerow([model, rep.attribute, g.group, fmt(g.tpr), fmt(g.fpr), g.n_positive, g.n_negative, fmt(rep.eod_mean), "ok"])
        for attribute, reason in notes:
            writer.writerow([model, attribute, "", "", "", "", "", "", f"insufficient support: {reason}"])
