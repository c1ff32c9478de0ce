"""Error metrics and cross-realization statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UndefinedMetricError(ValueError):
    """The metric's denominator vanishes (all-zero reference)."""


def relative_l2(predicted, exact):
    """||predicted - exact||_2 / ||exact||_2 over the whole evaluation set."""
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    exact = np.asarray(exact, dtype=np.float64).ravel()
    if predicted.shape != exact.shape:
        raise ValueError("predicted and exact must have equal lengths")
    denom = np.linalg.norm(exact)
    if denom == 0.0:
        raise UndefinedMetricError("exact values are all zero")
    return float(np.linalg.norm(predicted - exact) / denom)


def relative_l2_columns(predicted, exact):
    """Per-component relative L2 errors of (N, k) blocks."""
    predicted = np.asarray(predicted, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    return [
        relative_l2(predicted[:, j], exact[:, j]) for j in range(exact.shape[1])
    ]


def sum_relative_l2(pred_triple, exact_triple):
    """Sum of the per-component relative L2 errors."""
    pred = np.asarray(pred_triple, dtype=np.float64)
    exact = np.asarray(exact_triple, dtype=np.float64)
    if pred.ndim == 1:
        pred = pred[:, None]
        exact = exact[:, None]
    return float(sum(relative_l2_columns(pred, exact)))


def percent_error(theta_est, theta_true):
    """100 |est - true| / |true| per component."""
    est = np.asarray(theta_est, dtype=np.float64)
    true = np.asarray(theta_true, dtype=np.float64)
    if np.any(true == 0.0):
        raise UndefinedMetricError("true coefficient is zero")
    return 100.0 * np.abs(est - true) / np.abs(true)


@dataclass(frozen=True)
class RealizationStats:
    mean: float
    sd: float
    minimum: float
    maximum: float
    count: int


def aggregate(values):
    """Mean, population SD and extremes over realization values."""
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot aggregate an empty collection")
    return RealizationStats(
        mean=float(values.mean()),
        sd=float(values.std()),
        minimum=float(values.min()),
        maximum=float(values.max()),
        count=int(values.size),
    )
