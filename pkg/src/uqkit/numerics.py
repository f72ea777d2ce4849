"""Stable probability transforms and order statistics.

All arrays are 64-bit floats. Matrices are 2-D row-major numpy arrays;
probability matrices hold one distribution per row.
"""

from __future__ import annotations

import numpy as np


def check_finite(arr: np.ndarray, name: str = "input") -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Softmax along ``axis``, computed with max-subtraction for stability.

    Output rows are positive and sum to 1 to within 1e-12; adding a
    constant to all logits leaves the result unchanged.
    """
    z = check_finite(logits, "logits")
    if z.size == 0:
        raise ValueError("softmax of an empty array")
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_sum_exp(v, axis: int | None = None):
    """ln sum(exp(v)) along ``axis``, stable for large magnitudes."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty array")
    m = np.max(v, axis=axis, keepdims=True)
    # -inf entries are legal (they contribute zero mass)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def kth_smallest(scores, k: int) -> float:
    """k-th order statistic (1-based) of ``scores``.

    Ties resolve by value, so the result is invariant to permuting the
    input.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    n = s.size
    if not 1 <= k <= n:
        raise IndexError(f"k must be in [1, {n}], got {k}")
    return float(np.partition(s, k - 1)[k - 1])


def entropy(probs, axis: int = -1) -> np.ndarray:
    """Shannon entropy in nats along ``axis``; 0 * log 0 counts as 0."""
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return -np.sum(terms, axis=axis)


def check_prob_rows(probs: np.ndarray, name: str = "probs", tol: float = 1e-6) -> np.ndarray:
    """Validate a probability matrix: finite rows summing to 1 within tol."""
    p = check_finite(probs, name)
    if p.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {p.shape}")
    sums = p.sum(axis=1)
    bad = np.abs(sums - 1.0) > tol
    if np.any(bad):
        row = int(np.argmax(bad))
        raise ValueError(
            f"{name} row {row} sums to {sums[row]:.9g}, expected 1 within {tol}"
        )
    return p


def check_labels(targets, n_classes: int, name: str = "targets") -> np.ndarray:
    """Validate integer class labels in [0, n_classes)."""
    y = np.asarray(targets)
    if y.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        yf = np.asarray(y, dtype=np.float64)
        if np.any(yf != np.round(yf)):
            raise ValueError(f"{name} must hold integer class labels")
        y = yf.astype(np.int64)
    else:
        y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(
            f"{name} out of range: labels must lie in [0, {n_classes})"
        )
    return y
