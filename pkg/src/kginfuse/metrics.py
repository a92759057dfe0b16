"""Classification metrics and report rendering.

The deployment-risk metric emphasized throughout is the false-alarm
rate: false positives over actual negatives, with respect to the
designated positive class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass
class EvalReport:
    labels: tuple
    confusion: np.ndarray          # rows = true label, cols = predicted
    precision: dict
    recall: dict
    f1: dict
    false_alarm: float
    positive_label: str
    accuracy: float
    metadata: dict = field(default_factory=dict)

    def support(self, label: str) -> int:
        return int(self.confusion[self.labels.index(label)].sum())


def evaluate_predictions(y_true, y_pred, labels, positive_label, metadata=None) -> EvalReport:
    labels = tuple(labels)
    if positive_label not in labels:
        raise ValidationError(f"positive label {positive_label!r} not in label set")
    index = {label: i for i, label in enumerate(labels)}
    unknown = {y for y in list(y_true) + list(y_pred) if y not in index}
    if unknown:
        raise ValidationError("labels outside the label set: " + ", ".join(sorted(unknown)))
    confusion = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        confusion[index[t], index[p]] += 1

    precision, recall, f1 = {}, {}, {}
    for label, i in index.items():
        tp = confusion[i, i]
        predicted = confusion[:, i].sum()
        actual = confusion[i, :].sum()
        precision[label] = float(tp / predicted) if predicted else 0.0
        recall[label] = float(tp / actual) if actual else 0.0
        denom = precision[label] + recall[label]
        f1[label] = 2 * precision[label] * recall[label] / denom if denom else 0.0

    pos = index[positive_label]
    false_positives = confusion[:, pos].sum() - confusion[pos, pos]
    actual_negatives = confusion.sum() - confusion[pos, :].sum()
    false_alarm = float(false_positives / actual_negatives) if actual_negatives else 0.0
    accuracy = float(np.trace(confusion) / confusion.sum()) if confusion.sum() else 0.0
    return EvalReport(
        labels=labels,
        confusion=confusion,
        precision=precision,
        recall=recall,
        f1=f1,
        false_alarm=false_alarm,
        positive_label=positive_label,
        accuracy=accuracy,
        metadata=dict(metadata or {}),
    )


def report_text(report: EvalReport) -> str:
    lines = ["label     precision  recall     f1         support"]
    for label in report.labels:
        lines.append(
            "%-9s %-10.4f %-10.4f %-10.4f %d"
            % (label, report.precision[label], report.recall[label],
               report.f1[label], report.support(label))
        )
    lines.append("")
    lines.append(f"accuracy: {report.accuracy:.4f}")
    lines.append(
        f"false-alarm rate (positive = {report.positive_label}): {report.false_alarm:.4f}"
    )
    lines.append("")
    lines.append("confusion matrix (rows = true, cols = predicted):")
    header = "          " + " ".join("%-9s" % l for l in report.labels)
    lines.append(header)
    for i, label in enumerate(report.labels):
        row = " ".join("%-9d" % v for v in report.confusion[i])
        lines.append("%-9s %s" % (label, row))
    for key in sorted(report.metadata):
        lines.append(f"{key}: {report.metadata[key]}")
    return "\n".join(lines) + "\n"


def report_csv(report: EvalReport) -> str:
    lines = ["label,precision,recall,f1,support"]
    for label in report.labels:
        lines.append(
            f"{label},{report.precision[label]!r},{report.recall[label]!r},"
            f"{report.f1[label]!r},{report.support(label)}"
        )
    lines.append(f"__accuracy__,{report.accuracy!r},,,")
    lines.append(f"__false_alarm__,{report.false_alarm!r},,,")
    return "\n".join(lines) + "\n"
