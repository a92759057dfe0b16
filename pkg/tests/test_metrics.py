"""Evaluation metrics against hand-computed confusion arithmetic."""

import numpy as np
import pytest

from kginfuse.errors import ValidationError
from kginfuse.metrics import evaluate_predictions, report_csv, report_text


def binary_case(tp, fp, fn, tn):
    y_true = ["pos"] * (tp + fn) + ["neg"] * (fp + tn)
    y_pred = (["pos"] * tp + ["neg"] * fn) + (["pos"] * fp + ["neg"] * tn)
    return evaluate_predictions(y_true, y_pred, ("neg", "pos"), "pos")


def test_hand_computed_binary_confusion():
    # tp=3, fp=1, fn=1, tn=5: precision 0.75, recall 0.75, false alarm 1/6.
    report = binary_case(tp=3, fp=1, fn=1, tn=5)
    assert report.precision["pos"] == 0.75
    assert report.recall["pos"] == 0.75
    assert abs(report.false_alarm - 1 / 6) < 1e-15
    assert report.f1["pos"] == 0.75
    assert report.accuracy == 0.8


def test_perfect_classifier():
    report = binary_case(tp=4, fp=0, fn=0, tn=6)
    assert report.f1["pos"] == 1.0
    assert report.false_alarm == 0.0


def test_constant_majority_predictor_has_zero_minority_recall():
    y_true = ["neg"] * 7 + ["pos"] * 3
    y_pred = ["neg"] * 10
    report = evaluate_predictions(y_true, y_pred, ("neg", "pos"), "pos")
    assert report.recall["pos"] == 0.0
    assert report.precision["pos"] == 0.0
    assert report.false_alarm == 0.0


def test_confusion_row_sums_match_supports():
    rng = np.random.default_rng(0)
    labels = ("a", "b", "c")
    y_true = [labels[i] for i in rng.integers(0, 3, size=60)]
    y_pred = [labels[i] for i in rng.integers(0, 3, size=60)]
    report = evaluate_predictions(y_true, y_pred, labels, "a")
    for i, label in enumerate(labels):
        assert report.confusion[i].sum() == sum(1 for y in y_true if y == label)
        assert report.support(label) == report.confusion[i].sum()
    assert 0.0 <= report.false_alarm <= 1.0


def test_unknown_label_rejected():
    with pytest.raises(ValidationError):
        evaluate_predictions(["x"], ["x"], ("a", "b"), "a")
    with pytest.raises(ValidationError):
        evaluate_predictions(["a"], ["a"], ("a", "b"), "zzz")


def test_reports_render():
    report = binary_case(tp=3, fp=1, fn=1, tn=5)
    text = report_text(report)
    assert "false-alarm" in text
    csv = report_csv(report)
    assert csv.splitlines()[0] == "label,precision,recall,f1,support"
    assert "__false_alarm__" in csv
