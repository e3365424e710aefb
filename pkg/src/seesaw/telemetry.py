"""Cumulative positive/negative logit-gradient bookkeeping per class."""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .data import GROUP_NAMES, frequency_groups

EPS = 1e-12


@dataclass
class TelemetryLog:
    pos_grad_sum: np.ndarray
    neg_grad_sum: np.ndarray

    @classmethod
    def zeros(cls, num_classes):
        return cls(np.zeros(num_classes), np.zeros(num_classes))

    @property
    def num_classes(self):
        return self.pos_grad_sum.shape[0]

    def record(self, labels, grad_logits):
        """Accumulate ``|dL/dz|`` of one batch, split by positive/negative role."""
        g = np.abs(np.atleast_2d(grad_logits))
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        rows = np.arange(g.shape[0])
        np.add.at(self.pos_grad_sum, labels, g[rows, labels])
        g = g.copy()
        g[rows, labels] = 0.0
        self.neg_grad_sum += g.sum(axis=0)


@dataclass
class RatioRow:
    cls: int
    count: int
    group: str
    pos: float
    neg: float
    ratio: float


def grad_ratio_report(log, counts_static, thresholds=None):
    """Per-class ``pos/neg`` ratios, classes sorted by descending training count.

    A class whose negative sum is below ``EPS`` gets ``ratio = inf``.
    """
    counts_static = np.asarray(counts_static)
    groups = frequency_groups(counts_static, thresholds)
    order = np.argsort(-counts_static, kind="stable")
    rows = []
    for k in order.tolist():
        pos, neg = float(log.pos_grad_sum[k]), float(log.neg_grad_sum[k])
        ratio = math.inf if neg < EPS else pos / neg
        rows.append(RatioRow(k, int(counts_static[k]), GROUP_NAMES[groups[k]], pos, neg, ratio))
    return rows


def group_mean_ratios(rows):
    """Mean finite ratio per frequency group (NaN for a group with none)."""
    out = {}
    for name in GROUP_NAMES:
        vals = [r.ratio for r in rows if r.group == name and math.isfinite(r.ratio)]
        out[name] = float(np.mean(vals)) if vals else math.nan
    return out


def ratio_spread(group_means):
    """max/min of the group-mean ratios; the closer to 1 the more balanced."""
    vals = [v for v in group_means.values() if math.isfinite(v)]
    if not vals or min(vals) <= 0:
        return math.inf
    return max(vals) / min(vals)


def write_report(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "count", "group", "pos_grad_sum", "neg_grad_sum", "ratio"])
        for r in rows:
            w.writerow([r.cls, r.count, r.group, repr(r.pos), repr(r.neg), repr(r.ratio)])


def read_report(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            RatioRow(int(d["class"]), int(d["count"]), d["group"], float(d["pos_grad_sum"]),
                     float(d["neg_grad_sum"]), float(d["ratio"]))
            for d in reader
        ]
