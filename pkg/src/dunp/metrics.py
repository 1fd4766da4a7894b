"""Threshold metrics for binary masks.

Predictions binarize at a threshold (>= is positive).  Per-sample
counts feed precision, recall, Dice coefficient, and IoU, each with the
zero-denominator convention: 1.0 when prediction and ground truth are
both empty, 0.0 otherwise.  Reports aggregate either macro (average of
per-sample metrics) or micro (metrics of pooled counts).
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ConfigurationError

METRIC_NAMES = ("precision", "recall", "dsc", "iou")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


def confusion(pred, target, threshold: float = 0.5) -> ConfusionCounts:
    if isinstance(pred, Tensor):
        pred = pred.data
    if isinstance(target, Tensor):
        target = target.data
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ConfigurationError(
            f"confusion: prediction shape {pred.shape} != target shape {target.shape}")
    p = pred >= threshold
    t = target >= 0.5
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = p.size - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num: float, den: float, c: ConfusionCounts) -> float:
    if den == 0:
        return 1.0 if (c.tp == 0 and c.fp == 0 and c.fn == 0) else 0.0
    return num / den


def precision(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fp, c)


def recall(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fn, c)


def dsc(c: ConfusionCounts) -> float:
    return _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, c)


def iou(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fp + c.fn, c)


def all_metrics(c: ConfusionCounts) -> dict:
    return {"precision": precision(c), "recall": recall(c),
            "dsc": dsc(c), "iou": iou(c)}


@dataclass
class SampleMetrics:
    sample_id: str
    counts: ConfusionCounts
    values: dict


@dataclass
class MetricsReport:
    per_sample: list
    average: str = "macro"

    def __post_init__(self):
        if self.average not in ("macro", "micro"):
            raise ConfigurationError(f"unknown averaging mode {self.average!r}")
        if not self.per_sample:
            raise ConfigurationError("metrics report needs at least one sample")

    @property
    def pooled_counts(self) -> ConfusionCounts:
        total = ConfusionCounts(0, 0, 0, 0)
        for s in self.per_sample:
            total = total + s.counts
        return total

    def aggregate(self) -> dict:
        if self.average == "micro":
            return all_metrics(self.pooled_counts)
        n = len(self.per_sample)
        return {k: sum(s.values[k] for s in self.per_sample) / n for k in METRIC_NAMES}

    def __getattr__(self, name):
        if name.startswith("mean_") and name[5:] in METRIC_NAMES:
            return self.aggregate()[name[5:]]
        raise AttributeError(name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("sample_id,tp,fp,tn,fn,precision,recall,dsc,iou\n")
        for s in self.per_sample:
            c, v = s.counts, s.values
            buf.write(f"{s.sample_id},{c.tp},{c.fp},{c.tn},{c.fn},"
                      f"{v['precision']:.10g},{v['recall']:.10g},"
                      f"{v['dsc']:.10g},{v['iou']:.10g}\n")
        c = self.pooled_counts
        a = self.aggregate()
        buf.write(f"aggregate,{c.tp},{c.fp},{c.tn},{c.fn},"
                  f"{a['precision']:.10g},{a['recall']:.10g},"
                  f"{a['dsc']:.10g},{a['iou']:.10g}\n")
        return buf.getvalue()


def report_for_pairs(pairs, threshold: float = 0.5, average: str = "macro") -> MetricsReport:
    """pairs: iterable of (sample_id, prediction, target)."""
    rows = []
    for sample_id, pred, target in pairs:
        c = confusion(pred, target, threshold)
        rows.append(SampleMetrics(sample_id=str(sample_id), counts=c,
                                  values=all_metrics(c)))
    return MetricsReport(per_sample=rows, average=average)
