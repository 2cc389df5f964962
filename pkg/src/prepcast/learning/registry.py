"""Per-(resource class, metric) agents with a pooled ``generic`` fallback."""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

from ..errors import CorruptModelError, InsufficientDataError, NoModelError, VersionError
from ..records import MetricKind, ProfileRecord, parse_metric
from .forest import ForestModel, ForestParams, train_forest
from .linear import LinearModel, train_linear

GENERIC = "generic"
MODEL_VERSION = 1

Model = Union[ForestModel, LinearModel]


class Prediction(NamedTuple):
    value: float
    fallback: bool
    model_class: str


@dataclass
class AgentRegistry:
    models: dict[tuple[str, MetricKind], Model] = field(default_factory=dict)

    def add(self, resource_class: str, metric: MetricKind, model: Model) -> None:
        self.models[(resource_class, metric)] = model

    def lookup(self, resource_class: str, metric: MetricKind) -> tuple[Model, bool, str]:
        model = self.models.get((resource_class, metric))
        if model is not None:
            return model, False, resource_class
        model = self.models.get((GENERIC, metric))
        if model is not None:
            return model, resource_class != GENERIC, GENERIC
        raise NoModelError(f"no {metric.value} model for class {resource_class!r} and no generic fallback")

    def predict(self, resource_class: str, metric: MetricKind, row: np.ndarray) -> Prediction:
        model, fallback, used = self.lookup(resource_class, metric)
        return Prediction(max(0.0, model.predict_one(row)), fallback, used)

    def classes(self) -> list[str]:
        return sorted({c for c, _ in self.models})

    def __contains__(self, key: tuple[str, MetricKind]) -> bool:
        return key in self.models

    def __len__(self) -> int:
        return len(self.models)


def predict(registry: AgentRegistry, resource_class: str, metric: MetricKind, row: np.ndarray) -> Prediction:
    """Clamped (>= 0) prediction, falling back to the generic model for unknown classes."""
    return registry.predict(resource_class, metric, row)


def train_registry(
    records: Sequence[ProfileRecord],
    metrics: Iterable[MetricKind] = tuple(MetricKind),
    params: ForestParams = ForestParams(),
    classes: Iterable[str] | None = None,
    generic: bool = True,
    model_kind: str = "forest",
) -> AgentRegistry:
    """Train one agent per (class, metric), plus pooled generic agents.

    Pairs with too few usable records are skipped; an empty result raises
    InsufficientDataError.
    """
    records = list(records)
    if classes is None:
        classes = sorted({r.resource_class for r in records})
    groups = {c: [r for r in records if r.resource_class == c] for c in classes}
    if generic:
        groups[GENERIC] = records
    registry = AgentRegistry()
    for metric in metrics:
        for cls_name, recs in groups.items():
            try:
                registry.add(cls_name, metric, fit_model(recs, metric, params, model_kind))
            except InsufficientDataError:
                continue
    if not registry.models:
        raise InsufficientDataError("no (class, metric) pair had enough records to train")
    return registry


def fit_model(records: Sequence[ProfileRecord], metric: MetricKind, params: ForestParams, model_kind: str) -> Model:
    if model_kind == "forest":
        return train_forest(records, metric, params)
    if model_kind == "linear":
        return train_linear(records, metric)
    raise ValueError(f"unknown model kind {model_kind!r}")


# -- persistence ----------------------------------------------------------------

_SAFE = re.compile(r"[^A-Za-z0-9_.-]")


def model_filename(resource_class: str, metric: MetricKind) -> str:
    return f"{_SAFE.sub('_', resource_class)}__{metric.value}.json"


def model_to_json(resource_class: str, metric: MetricKind, model: Model) -> str:
    doc = {"v": MODEL_VERSION, "resource_class": resource_class, "metric": metric.value, "model": model.to_dict()}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def load_model_file(path: str | os.PathLike) -> tuple[str, MetricKind, Model]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptModelError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or "v" not in doc:
        raise CorruptModelError(f"{path}: not a model document")
    if doc["v"] != MODEL_VERSION:
        raise VersionError(f"{path}: unsupported model version {doc['v']!r}")
    try:
        metric = parse_metric(doc["metric"])
        body = doc["model"]
        if body["kind"] == "forest":
            model: Model = ForestModel.from_dict(body)
        elif body["kind"] == "linear":
            model = LinearModel.from_dict(body)
        else:
            raise ValueError(f"unknown model kind {body['kind']!r}")
        return str(doc["resource_class"]), metric, model
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModelError(f"{path}: {exc}") from None


def save_registry(registry: AgentRegistry, path: str | os.PathLike) -> list[Path]:
    """Write one JSON file per agent into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for (cls_name, metric), model in sorted(registry.models.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        target = out / model_filename(cls_name, metric)
        target.write_text(model_to_json(cls_name, metric, model), encoding="utf-8")
        written.append(target)
    return written


def load_registry(path: str | os.PathLike) -> AgentRegistry:
    """Load a model directory, or a single model file."""
    p = Path(path)
    files = sorted(p.glob("*.json")) if p.is_dir() else [p]
    registry = AgentRegistry()
    for f in files:
        cls_name, metric, model = load_model_file(f)
        registry.add(cls_name, metric, model)
    return registry
