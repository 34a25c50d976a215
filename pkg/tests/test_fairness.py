import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coughscreen.audio_io import Label, Sex, Smoking, SubjectRecord
from coughscreen.fairness import (
    OLDER, YOUNGER, InsufficientSupportError, age_group, age_quartile, eod_mean_from_rates,
    equalized_odds_difference_mean, round_half_up, stratify_age, write_fairness_report,
)


def test_reported_eod_values():
    assert round_half_up(eod_mean_from_rates(0.91, 1.00, 0.20, 0.00), 2) == 0.15
    assert round_half_up(eod_mean_from_rates(0.86, 1.00, 0.17, 0.20), 2) == 0.09


def test_from_predictions():
    y_true = [1, 1, 0, 0, 1, 1, 0, 0]
    y_pred = [1, 0, 0, 1, 1, 1, 0, 0]
    groups = ["a"] * 4 + ["b"] * 4
    rep = equalized_odds_difference_mean(y_true, y_pred, groups, "g")
    a, b = rep.groups
    assert (a.tpr, a.fpr, b.tpr, b.fpr) == (0.5, 0.5, 1.0, 0.0)
    assert rep.eod_mean == pytest.approx(0.5)


def test_parity_zero():
    y_true = [1, 0, 1, 0]
    y_pred = [1, 0, 1, 0]
    assert equalized_odds_difference_mean(y_true, y_pred, ["a", "a", "b", "b"]).eod_mean == 0


def test_missing_class_names_group():
    with pytest.raises(InsufficientSupportError, match="'b'"):
        equalized_odds_difference_mean([1, 0, 1, 1], [1, 0, 1, 1], ["a", "a", "b", "b"])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_symmetry_and_relabel_invariance(seed):
    rng = np.random.default_rng(seed)
    y = np.array([0, 1, 0, 1] + list(rng.integers(0, 2, 20)))
    p = rng.integers(0, 2, len(y))
    g = np.array(["a", "a", "b", "b"] + list(rng.choice(["a", "b"], 20)))
    try:
        e1 = equalized_odds_difference_mean(y, p, g).eod_mean
    except InsufficientSupportError:
        return
    e2 = equalized_odds_difference_mean(y, p, np.where(g == "a", "zz", "aa")).eod_mean
    assert e1 == pytest.approx(e2, abs=1e-15)
    assert 0 <= e1 <= 1


def test_zero_iff_equal_rates():
    assert eod_mean_from_rates(0.5, 0.5, 0.2, 0.2) == 0
    assert eod_mean_from_rates(0.5, 0.5, 0.2, 0.3) > 0


def test_age_boundary():
    assert age_group(58) == OLDER and age_group(57) == YOUNGER
    rec = [SubjectRecord("a", Label.HEALTHY, 58, Sex.MALE, Smoking.NEVER, "x"), SubjectRecord("b", Label.HEALTHY, 30, Sex.MALE, Smoking.NEVER, "x")]
    assert stratify_age(rec) == [OLDER, YOUNGER]


def test_quartile_matches_threshold():
    ages = [28, 30, 35, 40, 45, 45, 50, 55, 58, 58, 60, 62, 64]
    assert age_quartile(ages) == 58


def test_round_half_up():
    assert round_half_up(0.145, 2) == 0.15
    assert round_half_up(0.085, 2) == 0.09
    assert round_half_up(0.144999, 2) == 0.14


def test_report_layout(tmp_path):
    rep = equalized_odds_difference_mean([1, 0, 1, 0], [1, 0, 0, 0], ["x", "x", "y", "y"], "sex")
    path = tmp_path / "f.csv"
    write_fairness_report(path, [rep], notes=[("age", "group 'older' has no negative instances")], model="svm")
    rows = list(csv.DictReader(open(path)))
    assert [r["group"] for r in rows[:2]] == ["x", "y"]
    assert rows[0]["eod_mean"] == "0.50" and rows[0]["TPR"] == "1.00"
    assert rows[2]["status"].startswith("insufficient support")
