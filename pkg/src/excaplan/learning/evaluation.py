"""Offline evaluation: confusion-matrix metrics for the classifier and
L1 statistics (cm^3) for the regressor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    accuracy: float = 0.0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    l1_mean: float | None = None
    l1_std: float | None = None


def classification_metrics(labels, predicted_positive) -> Metrics:
    """Standard accuracy/precision/recall/F1; zero-denominator cases give 0."""
    y = np.asarray(labels, dtype=bool)
    p = np.asarray(predicted_positive, dtype=bool)
    if len(y) == 0:
        raise ValueError("empty evaluation set")
    tp = int(np.sum(p & y))
    fp = int(np.sum(p & ~y))
    fn = int(np.sum(~p & y))
    tn = int(np.sum(~p & ~y))
    accuracy = (tp + tn) / len(y)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(accuracy, precision, recall, f1)


def regression_metrics(true_volumes, predicted_volumes) -> Metrics:
    """Mean and population std of |predicted - true| in cm^3."""
    t = np.asarray(true_volumes, dtype=np.float64)
    p = np.asarray(predicted_volumes, dtype=np.float64)
    if len(t) == 0:
        raise ValueError("empty evaluation set")
    err = np.abs(p - t)
    return Metrics(l1_mean=float(err.mean()), l1_std=float(err.std()))


def evaluate_classifier(model, samples, threshold: float = 0.5) -> Metrics:
    """Score a sample list with the model and compute metrics at the threshold."""
    from .training import TrainingArrays, predict_arrays

    arrays = TrainingArrays(samples, model.spec)
    preds = predict_arrays(model, arrays)
    return classification_metrics(arrays.labels > 0.5, preds >= threshold)


def evaluate_regressor(model, samples) -> Metrics:
    from .training import TrainingArrays, predict_arrays

    arrays = TrainingArrays(samples, model.spec)
    preds = predict_arrays(model, arrays)
    return regression_metrics(arrays.volumes, preds)
