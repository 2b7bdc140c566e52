"""Confusion counts and the six KPIs (ERR, ACC, F1, AUC, TPR, TNR) for binary decisions.

Predictions are positive when ``score >= threshold``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

DEFAULT_THRESHOLD = 0.5
KPI_NAMES = ("err", "acc", "f1", "auc", "tpr", "tnr")
CSV_FIELDS = ("err", "acc", "f1", "auc", "tpr", "tnr", "tp", "fp", "tn", "fn", "threshold")


class UndefinedAucError(ValueError):
    """AUC asked for on a label vector holding a single class."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class KpiReport:
    err: float
    acc: float
    f1: float
    auc: float  # NaN when the labels hold one class only
    tpr: float
    tnr: float
    counts: ConfusionCounts
    threshold: float = DEFAULT_THRESHOLD

    def get(self, name: str) -> float:
        return float(getattr(self, name.lower()))

    def to_row(self) -> dict:
        row = {k: getattr(self, k) for k in KPI_NAMES}
        row.update(asdict(self.counts))
        row["threshold"] = self.threshold
        return row

    @classmethod
    def from_row(cls, row: dict) -> "KpiReport":
        counts = ConfusionCounts(*(int(float(row[k])) for k in ("tp", "fp", "tn", "fn")))
        auc = row["auc"]
        auc = math.nan if auc in ("", "n/a", None) else float(auc)
        return cls(float(row["err"]), float(row["acc"]), float(row["f1"]), auc,
                   float(row["tpr"]), float(row["tnr"]), counts, float(row["threshold"]))


def _check_pair(labels, scores):
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape or y.ndim != 1:
        raise ValueError(f"labels and scores must be 1-D and equal length, got {y.shape} and {s.shape}")
    if y.size == 0:
        raise ValueError("empty input")
    return y.astype(float), s


def mean_error(outputs, targets) -> float:
    """Average of the half squared error, i.e. E / N."""
    t, o = _check_pair(targets, outputs)
    return float(0.5 * np.mean((o - t) ** 2))


def confusion(labels, scores, threshold: float = DEFAULT_THRESHOLD) -> ConfusionCounts:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    y, s = _check_pair(labels, scores)
    pos = y == 1
    pred = s >= threshold
    tp = int(np.count_nonzero(pred & pos))
    fp = int(np.count_nonzero(pred & ~pos))
    fn = int(np.count_nonzero(~pred & pos))
    return ConfusionCounts(tp=tp, fp=fp, tn=y.size - tp - fp - fn, fn=fn)


def auc_roc(labels, scores) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2).

    Computed from mid-ranks (Mann-Whitney U), which equals the pairwise count exactly.
    """
    y, s = _check_pair(labels, scores)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError("AUC needs at least one positive and one negative label")
    ranks = rankdata(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def rates(c: ConfusionCounts):
    """(acc, f1, tpr, tnr) from counts, with the degenerate-class conventions."""
    acc = (c.tp + c.tn) / c.total
    tpr = c.tp / (c.tp + c.fn) if c.tp + c.fn else 1.0
    tnr = c.tn / (c.tn + c.fp) if c.tn + c.fp else 1.0
    # 2*prec*rec/(prec+rec) simplifies to 2tp/(2tp+fp+fn); zero when tp == 0
    f1 = 2 * c.tp / (2 * c.tp + c.fp + c.fn) if c.tp else 0.0
    return acc, f1, tpr, tnr


def kpi_suite(labels, scores, threshold: float = DEFAULT_THRESHOLD) -> KpiReport:
    err = mean_error(scores, labels)
    c = confusion(labels, scores, threshold)
    acc, f1, tpr, tnr = rates(c)
    try:
        auc = auc_roc(labels, scores)
    except UndefinedAucError:
        auc = math.nan
    return KpiReport(err, acc, f1, auc, tpr, tnr, c, threshold)


def format_kpi(value: float, digits: int = 4) -> str:
    return "n/a" if value is None or math.isnan(value) else f"{value:.{digits}f}"
