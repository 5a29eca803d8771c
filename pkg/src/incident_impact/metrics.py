"""Regression metrics reported per target."""

from __future__ import annotations

import numpy as np

TARGETS = ("dur", "len")
METRICS = ("rmse", "mae", "smape")


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {truth.size} labels")
    if pred.size == 0:
        raise ValueError("metrics need at least one value")
    return pred, truth


def rmse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((truth - pred) ** 2)))


def mae(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(truth - pred)))


def smape(pred, truth) -> float:
    """Mean of ``2|y - yhat| / (|y| + |yhat|)``; a 0/0 term counts as 0."""
    pred, truth = _pair(pred, truth)
    num = 2.0 * np.abs(truth - pred)
    den = np.abs(truth) + np.abs(pred)
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(np.mean(terms))


def metric_row(pred, truth) -> dict[str, float]:
    """Six numbers ordered duration RMSE/MAE/sMAPE then length RMSE/MAE/sMAPE."""
    pred = np.asarray(pred, dtype=float).reshape(-1, 2)
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    row = {}
    for j, target in enumerate(TARGETS):
        for name, fn in zip(METRICS, (rmse, mae, smape)):
            row[f"{target}_{name}"] = fn(pred[:, j], truth[:, j])
    return row


COLUMNS = tuple(f"{t}_{m}" for t in TARGETS for m in METRICS)
