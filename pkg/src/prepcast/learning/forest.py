"""Random-forest regression: bootstrap-aggregated CART trees."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from ..errors import InsufficientDataError
from ..records import MetricKind, ProfileRecord
from ..rng import derive_seed
from .features import TRANSFORM, feature_names, training_matrix
from .tree import RegressionTree, TreeParams, bootstrap_indices, train_tree

MIN_FOREST_RECORDS = 5


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = 12
    min_leaf: int = 2
    feature_subsample_count: int | None = None  # None: every feature at every split
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if self.feature_subsample_count is not None and self.feature_subsample_count < 1:
            raise ValueError("feature_subsample_count must be >= 1 or None")

    def tree_params(self, n_features: int) -> TreeParams:
        k = self.feature_subsample_count
        return TreeParams(self.max_depth, self.min_leaf, None if k is None else min(k, n_features))


@dataclass(eq=False)
class ForestModel:
    trees: list[RegressionTree]
    params: ForestParams
    meta: dict[str, Any] = field(default_factory=dict)

    kind = "forest"

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        """Shape (n_trees, n_rows)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X: np.ndarray) -> np.ndarray:
        preds = self.tree_predictions(X).mean(axis=0)
        # float rounding in the mean must not leave the training target range
        lo, hi = self.meta.get("target_min"), self.meta.get("target_max")
        if lo is not None and hi is not None:
            preds = np.clip(preds, lo, hi)
        return preds

    def predict_one(self, row: np.ndarray) -> float:
        return float(self.predict(np.asarray(row)[None, :])[0])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": asdict(self.params),
            "meta": self.meta,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        trees = [RegressionTree.from_dict(t) for t in d["trees"]]
        for t in trees:
            t.check()
        if not trees:
            raise ValueError("forest has no trees")
        return cls(trees, ForestParams(**d["params"]), dict(d.get("meta", {})))


def fit_forest(X: np.ndarray, y: np.ndarray, params: ForestParams = ForestParams()) -> ForestModel:
    """Fit on raw arrays. Tree ``i`` uses the stream ``derive_seed(seed, i)``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < 1:
        raise InsufficientDataError("no training rows")
    tp = params.tree_params(X.shape[1])
    trees = []
    for i in range(params.n_trees):
        stream = derive_seed(params.seed, i)
        if params.bootstrap:
            sample, stream = bootstrap_indices(n, stream)
        else:
            sample = None
        trees.append(train_tree(X, y, tp, seed=stream, sample=sample))
    meta = {
        "n": int(n),
        "target_min": float(y.min()),
        "target_max": float(y.max()),
    }
    return ForestModel(trees, params, meta)


def train_forest(
    records: Sequence[ProfileRecord],
    metric: MetricKind,
    params: ForestParams = ForestParams(),
) -> ForestModel:
    X, y = training_matrix(records, metric)
    if X.shape[0] < MIN_FOREST_RECORDS:
        raise InsufficientDataError(
            f"{metric.value}: need >= {MIN_FOREST_RECORDS} usable records, got {X.shape[0]}")
    model = fit_forest(X, y, params)
    model.meta.update({
        "metric": metric.value,
        "feature_order": list(feature_names(metric)),
        "transform": TRANSFORM,
        "loss": "squared_error",
    })
    return model
