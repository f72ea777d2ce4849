"""Calibration and accuracy metrics.

Conventions, fixed here because reference definitions leave them open:
ECE uses equal-width bins over (0, 1] with (lo, hi] boundaries and a
confidence of exactly 0 assigned to the first bin; the Brier score is the
multiclass sum over classes; interval coverage uses closed endpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .conformal import Intervals
from .numerics import check_finite, check_labels, check_prob_rows

DEFAULT_BINS = 15


@dataclass(frozen=True)
class Report:
    """Metric bundle serialized as JSON with exactly these field names."""

    nll: float
    ece: float
    brier: float
    accuracy: float
    n: int
    bins: int
    coverage: float | None = None
    mean_width: float | None = None

    def to_dict(self) -> dict:
        out = {
            "nll": self.nll,
            "ece": self.ece,
            "brier": self.brier,
            "accuracy": self.accuracy,
            "n": self.n,
            "bins": self.bins,
        }
        if self.coverage is not None:
            out["coverage"] = self.coverage
        if self.mean_width is not None:
            out["mean_width"] = self.mean_width
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def nll_classification(probs, targets) -> float:
    """Mean negative log likelihood; probabilities floored at 1e-300."""
    p = check_prob_rows(probs, "probs")
    y = check_labels(targets, p.shape[1], "targets")
    if y.shape[0] != p.shape[0]:
        raise ValueError("probs and targets disagree on length")
    picked = np.maximum(p[np.arange(p.shape[0]), y], 1e-300)
    return float(-np.mean(np.log(picked)))


def _bin_index(confidence: np.ndarray, n_bins: int) -> np.ndarray:
    """(lo, hi] bins; confidence 0 goes to bin 0."""
    idx = np.ceil(confidence * n_bins).astype(np.int64) - 1
    return np.clip(idx, 0, n_bins - 1)


def ece(probs, targets, n_bins: int = DEFAULT_BINS) -> float:
    """Expected calibration error of top-label confidence."""
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    p = check_prob_rows(probs, "probs")
    y = check_labels(targets, p.shape[1], "targets")
    n = p.shape[0]
    confidence = p.max(axis=1)
    correct = (p.argmax(axis=1) == y).astype(np.float64)
    idx = _bin_index(confidence, n_bins)
    total = 0.0
    for b in range(n_bins):
        mask = idx == b
        count = int(mask.sum())
        if count == 0:
            continue
        gap = abs(correct[mask].mean() - confidence[mask].mean())
        total += (count / n) * gap
    return float(total)


def brier(probs, targets) -> float:
    """Multiclass Brier score: mean squared distance to the one-hot target."""
    p = check_prob_rows(probs, "probs")
    y = check_labels(targets, p.shape[1], "targets")
    onehot = np.zeros_like(p)
    onehot[np.arange(p.shape[0]), y] = 1.0
    return float(np.mean(np.sum((p - onehot) ** 2, axis=1)))


def accuracy(probs, targets) -> float:
    """Fraction of rows whose argmax matches the target; ties take the
    lowest class index."""
    p = check_prob_rows(probs, "probs")
    y = check_labels(targets, p.shape[1], "targets")
    return float(np.mean(p.argmax(axis=1) == y))


def interval_metrics(intervals: Intervals, targets) -> tuple[float, float]:
    """(coverage, mean width) of closed intervals against targets."""
    y = check_finite(targets, "targets")
    if y.shape[0] != len(intervals):
        raise ValueError("intervals and targets disagree on length")
    coverage = float(np.mean(intervals.contains(y)))
    return coverage, float(np.mean(intervals.width()))


def classification_report(probs, targets, n_bins: int = DEFAULT_BINS) -> Report:
    """Bundle all classification metrics over one prediction matrix."""
    p = check_prob_rows(probs, "probs")
    return Report(
        nll=nll_classification(p, targets),
        ece=ece(p, targets, n_bins),
        brier=brier(p, targets),
        accuracy=accuracy(p, targets),
        n=p.shape[0],
        bins=n_bins,
    )
