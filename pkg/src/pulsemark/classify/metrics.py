"""Confusion matrices and per-class / macro scores."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..core import LABELS, AnomalyLabel

_INDEX = {lab: i for i, lab in enumerate(LABELS)}
ANOMALIES = (AnomalyLabel.MEMLEAK, AnomalyLabel.SHUTDOWN)


@dataclass
class ConfusionMatrix:
    """Counts indexed by (true label, predicted label) in ``LABELS`` order."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((len(LABELS), len(LABELS)), dtype=np.int64))

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (len(LABELS), len(LABELS)):
            raise ValueError(f"confusion matrix must be {len(LABELS)}x{len(LABELS)}")
        if np.any(self.counts < 0):
            raise ValueError("confusion counts must be non-negative")

    @classmethod
    def from_predictions(cls, truth: Iterable, predicted: Iterable) -> "ConfusionMatrix":
        cm = cls()
        for t, p in zip(truth, predicted, strict=True):
            cm.add(t, p)
        return cm

    def add(self, truth, predicted) -> None:
        self.counts[_INDEX[AnomalyLabel(truth)], _INDEX[AnomalyLabel(predicted)]] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class EvalReport:
    precision: dict[AnomalyLabel, float]
    recall: dict[AnomalyLabel, float]
    f_score: dict[AnomalyLabel, float]
    support: dict[AnomalyLabel, float]
    accuracy: float
    anomaly_recall: float
    repeats: int = 1

    @property
    def macro_f(self) -> float:
        """Unweighted mean of the per-class F-scores."""
        return macro_f(self.f_score[lab] for lab in LABELS)

    @property
    def weighted_macro_f(self) -> float:
        weights = np.array([self.support[lab] for lab in LABELS], dtype=float)
        if weights.sum() == 0:
            return 0.0
        scores = np.array([self.f_score[lab] for lab in LABELS])
        return float(np.dot(weights, scores) / weights.sum())


def macro_f(per_class_f: Iterable[float]) -> float:
    values = list(per_class_f)
    return float(sum(values) / len(values))


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def metrics(cm: ConfusionMatrix) -> EvalReport:
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    c = cm.counts
    precision, recall, f_score, support = {}, {}, {}, {}
    for lab, i in _INDEX.items():
        tp = c[i, i]
        p = _ratio(tp, c[:, i].sum())
        r = _ratio(tp, c[i, :].sum())
        precision[lab], recall[lab] = p, r
        f_score[lab] = _ratio(2 * p * r, p + r)
        support[lab] = float(c[i, :].sum())
    anomalous = [_INDEX[a] for a in ANOMALIES]
    flagged = c[np.ix_(anomalous, anomalous)].sum()
    return EvalReport(
        precision=precision,
        recall=recall,
        f_score=f_score,
        support=support,
        accuracy=float(np.trace(c) / cm.total),
        anomaly_recall=_ratio(flagged, c[anomalous, :].sum()),
    )


def average_reports(reports: Sequence[EvalReport]) -> EvalReport:
    if not reports:
        raise ValueError("nothing to average")

    def mean_of(attr):
        return {lab: float(np.mean([getattr(r, attr)[lab] for r in reports])) for lab in LABELS}

    return EvalReport(
        precision=mean_of("precision"),
        recall=mean_of("recall"),
        f_score=mean_of("f_score"),
        support=mean_of("support"),
        accuracy=float(np.mean([r.accuracy for r in reports])),
        anomaly_recall=float(np.mean([r.anomaly_recall for r in reports])),
        repeats=sum(r.repeats for r in reports),
    )
