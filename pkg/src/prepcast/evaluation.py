"""Held-out accuracy of trained agents: MAPE and RMSE per (class, metric)."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import InsufficientDataError
from .learning.features import training_matrix
from .learning.forest import ForestParams
from .learning.registry import GENERIC, AgentRegistry, fit_model
from .records import MetricKind, ProfileRecord, parse_metric
from .rng import SplitMix64, derive_seed

MIN_EVAL_RECORDS = 20
MAPE_EPSILON = 1e-9


@dataclass(frozen=True)
class CellReport:
    resource_class: str  # class whose test set was scored
    model_class: str  # class of the agent that made the predictions
    metric: str
    model_kind: str
    mape: float  # percent
    rmse: float
    n_test: int
    n_excluded: int  # targets below MAPE_EPSILON left out of MAPE
    fallback_rate: float


@dataclass
class EvalReport:
    cells: list[CellReport]
    meta: dict[str, Any] = field(default_factory=dict)

    def cell(self, resource_class: str, metric: MetricKind | str, model_class: str | None = None) -> CellReport:
        name = metric.value if isinstance(metric, MetricKind) else parse_metric(metric).value
        for c in self.cells:
            if c.resource_class == resource_class and c.metric == name and (
                    model_class is None or c.model_class == model_class):
                return c
        raise KeyError((resource_class, name, model_class))

    def to_dict(self) -> dict:
        return {"v": 1, "meta": self.meta, "cells": [asdict(c) for c in self.cells]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls([CellReport(**c) for c in d["cells"]], dict(d.get("meta", {})))

    def to_text(self) -> str:
        lines = [
            f"{'class':<12} {'model':<10} {'metric':<13} {'kind':<7} {'MAPE %':>9} {'RMSE':>12} {'n':>6} {'fallback':>8}"
        ]
        for c in self.cells:
            lines.append(
                f"{c.resource_class:<12} {c.model_class:<10} {c.metric:<13} {c.model_kind:<7} "
                f"{c.mape:>9.3f} {c.rmse:>12.4g} {c.n_test:>6d} {c.fallback_rate:>8.2f}"
            )
        for k in sorted(self.meta):
            lines.append(f"# {k}: {self.meta[k]}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(CellReport.__dataclass_fields__)
        writer = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        writer.writeheader()
        for c in self.cells:
            writer.writerow(asdict(c))
        return buf.getvalue()


def mape(y_true: np.ndarray, y_pred: np.ndarray, eps: float = MAPE_EPSILON) -> tuple[float, int]:
    """Mean absolute percentage error over targets >= eps, and the excluded count."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    keep = np.abs(y_true) >= eps
    excluded = int(np.sum(~keep))
    if not keep.any():
        return 0.0, excluded
    return float(100.0 * np.mean(np.abs(y_pred[keep] - y_true[keep]) / np.abs(y_true[keep]))), excluded


def rmse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    d = np.asarray(y_pred, dtype=np.float64) - np.asarray(y_true, dtype=np.float64)
    return float(math.sqrt(np.mean(d * d)))


def split_records(
    records: Sequence[ProfileRecord], test_ratio: float, seed: int
) -> tuple[list[ProfileRecord], list[ProfileRecord]]:
    """Deterministic per-class shuffle; ``round(n * test_ratio)`` of each class held out."""
    if not 0.0 <= test_ratio < 1.0:
        raise ValueError("test_ratio must lie in [0, 1)")
    train: list[ProfileRecord] = []
    test: list[ProfileRecord] = []
    for k, cls_name in enumerate(sorted({r.resource_class for r in records})):
        group = [r for r in records if r.resource_class == cls_name]
        SplitMix64(derive_seed(seed, k)).shuffle(group)
        n_test = round(len(group) * test_ratio)
        test.extend(group[:n_test])
        train.extend(group[n_test:])
    return train, test


def _score(
    registry: AgentRegistry,
    test: Sequence[ProfileRecord],
    cls_name: str,
    metric: MetricKind,
    model_kind: str,
    force_model_class: str | None = None,
) -> CellReport | None:
    X, y = training_matrix(test, metric)
    if X.shape[0] == 0:
        return None
    target = force_model_class or cls_name
    model, fallback, used = registry.lookup(target, metric)
    if force_model_class is not None:
        fallback = force_model_class != cls_name
    pred = np.maximum(model.predict(X), 0.0)
    m, excluded = mape(y, pred)
    return CellReport(
        resource_class=cls_name,
        model_class=used,
        metric=metric.value,
        model_kind=model_kind,
        mape=m,
        rmse=rmse(y, pred),
        n_test=int(X.shape[0]),
        n_excluded=excluded,
        fallback_rate=1.0 if fallback else 0.0,
    )


def _usable(records: Sequence[ProfileRecord], metric: MetricKind) -> int:
    if metric is MetricKind.NET_TRANSFER:
        return sum(1 for r in records if r.peer is not None)
    return len(records)


def _train(
    train: Sequence[ProfileRecord],
    classes: Iterable[str],
    metrics: Sequence[MetricKind],
    params: ForestParams,
    model_kind: str,
    generic: bool,
) -> AgentRegistry:
    registry = AgentRegistry()
    groups = {c: [r for r in train if r.resource_class == c] for c in classes}
    if generic:
        groups[GENERIC] = list(train)
    for metric in metrics:
        for cls_name, recs in groups.items():
            if _usable(recs, metric) == 0:
                continue
            registry.add(cls_name, metric, fit_model(recs, metric, params, model_kind))
    return registry


def _laws(records: Iterable[ProfileRecord]) -> list[str]:
    return sorted({str(r.meta["law"]) for r in records if "law" in r.meta})


def evaluate(
    records: Sequence[ProfileRecord],
    test_ratio: float = 0.25,
    seed: int = 0,
    params: ForestParams = ForestParams(),
    metrics: Sequence[MetricKind] = tuple(MetricKind),
    model_kind: str = "forest",
    generic: bool = False,
) -> EvalReport:
    """Train on a deterministic split and score the held-out part.

    With ``generic=True`` a pooled model is also trained and scored on every
    class's test set (cells with ``model_class == "generic"``).
    """
    train, test = split_records(records, test_ratio, seed)
    classes = sorted({r.resource_class for r in records})
    for cls_name in classes:
        for metric in metrics:
            n_all = _usable([r for r in records if r.resource_class == cls_name], metric)
            n_test = _usable([r for r in test if r.resource_class == cls_name], metric)
            if n_all == 0:
                continue
            if n_all < MIN_EVAL_RECORDS:
                raise InsufficientDataError(
                    f"{cls_name}/{metric.value}: {n_all} records, need >= {MIN_EVAL_RECORDS}")
            if n_test < 1:
                raise InsufficientDataError(f"{cls_name}/{metric.value}: split leaves no test records")
    registry = _train(train, classes, metrics, params, model_kind, generic)
    cells = []
    for cls_name in classes:
        test_c = [r for r in test if r.resource_class == cls_name]
        for metric in metrics:
            cell = _score(registry, test_c, cls_name, metric, model_kind)
            if cell is not None:
                cells.append(cell)
            if generic and (GENERIC, metric) in registry:
                cell = _score(registry, test_c, cls_name, metric, model_kind, force_model_class=GENERIC)
                if cell is not None:
                    cells.append(cell)
    meta = {
        "seed": seed,
        "test_ratio": test_ratio,
        "n_train": len(train),
        "n_test": len(test),
        "model_kind": model_kind,
        "params": asdict(params),
        "laws": _laws(records),
    }
    return EvalReport(cells, meta)


def eval_cross_workflow(
    records_a: Sequence[ProfileRecord],
    records_b: Sequence[ProfileRecord],
    params: ForestParams = ForestParams(),
    metrics: Sequence[MetricKind] = tuple(MetricKind),
    model_kind: str = "forest",
) -> EvalReport:
    """Train on workflow A only and score every record of workflow B.

    Classes of B unseen in A are served by the generic model (fallback rate
    1). When both sides carry oracle-law fingerprints that differ, the report
    is flagged ``law-mismatch``.
    """
    classes_a = sorted({r.resource_class for r in records_a})
    for cls_name in classes_a:
        for metric in metrics:
            n = _usable([r for r in records_a if r.resource_class == cls_name], metric)
            if 0 < n < MIN_EVAL_RECORDS:
                raise InsufficientDataError(f"{cls_name}/{metric.value}: {n} training records, need >= {MIN_EVAL_RECORDS}")
    if not records_b:
        raise InsufficientDataError("workflow B has no records to score")
    registry = _train(records_a, classes_a, metrics, params, model_kind, generic=True)
    cells = []
    for cls_name in sorted({r.resource_class for r in records_b}):
        test_c = [r for r in records_b if r.resource_class == cls_name]
        for metric in metrics:
            if (cls_name, metric) not in registry and (GENERIC, metric) not in registry:
                continue
            cell = _score(registry, test_c, cls_name, metric, model_kind)
            if cell is not None:
                cells.append(cell)
    laws_a, laws_b = _laws(records_a), _laws(records_b)
    flags = []
    if laws_a and laws_b and laws_a != laws_b:
        flags.append("law-mismatch")
    meta = {
        "n_train": len(records_a),
        "n_test": len(records_b),
        "model_kind": model_kind,
        "params": asdict(params),
        "laws_train": laws_a,
        "laws_test": laws_b,
        "flags": flags,
    }
    return EvalReport(cells, meta)
