"""Ordinary least squares baseline with a tiny ridge term."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..errors import InsufficientDataError
from ..records import MetricKind, ProfileRecord
from .features import TRANSFORM, feature_names, training_matrix

RIDGE_LAMBDA = 1e-8


@dataclass(eq=False)
class LinearModel:
    weights: np.ndarray
    intercept: float
    meta: dict[str, Any] = field(default_factory=dict)

    kind = "linear"

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X @ self.weights + self.intercept

    def predict_one(self, row: np.ndarray) -> float:
        return float(self.predict(np.asarray(row)[None, :])[0])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(np.asarray(d["weights"], dtype=np.float64), float(d["intercept"]), dict(d.get("meta", {})))


def fit_linear(X: np.ndarray, y: np.ndarray, ridge: float = RIDGE_LAMBDA) -> LinearModel:
    """Solve ``(Z'Z + ridge*I) w = Z'(y - mean)`` on z-scored columns.

    Standardizing keeps the normal equations well conditioned when columns
    differ by ten orders of magnitude; the intercept is not damped. Constant
    columns get weight 0.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    live = sd > 0
    Z = (X[:, live] - mu[live]) / sd[live]
    y_mean = float(y.mean())
    gram = Z.T @ Z + ridge * np.eye(Z.shape[1])
    w_std = np.linalg.solve(gram, Z.T @ (y - y_mean)) if Z.shape[1] else np.zeros(0)
    weights = np.zeros(X.shape[1])
    weights[live] = w_std / sd[live]
    intercept = y_mean - float(weights @ mu)
    return LinearModel(weights, intercept, {"ridge": ridge, "n": int(X.shape[0])})


def train_linear(records: Sequence[ProfileRecord], metric: MetricKind, ridge: float = RIDGE_LAMBDA) -> LinearModel:
    X, y = training_matrix(records, metric)
    need = X.shape[1] + 1
    if X.shape[0] < need:
        raise InsufficientDataError(f"{metric.value}: linear model needs >= {need} records, got {X.shape[0]}")
    model = fit_linear(X, y, ridge)
    model.meta.update({
        "metric": metric.value,
        "feature_order": list(feature_names(metric)),
        "transform": TRANSFORM,
        "loss": "squared_error",
    })
    return model
