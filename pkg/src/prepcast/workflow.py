"""Workflow DAGs, task characterization features and cluster descriptions.

All types are frozen dataclasses holding tuples, so a parsed workflow can be
shared freely between threads.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import CycleError, DanglingEdgeError, DepthError, ParseError, ValidationError

SCHEMA_VERSION = 1
MAX_DEPTH = 32
MIX_KEYS = ("fp", "int", "mem", "branch", "io")


class TaskKind(str, Enum):
    ATOMIC = "atomic"
    SUBWORKFLOW = "subworkflow"


@dataclass(frozen=True)
class AppFeatures:
    input_bytes: int = 0
    flop_count: int = 0
    branching_factor: float = 0.0  # branches per 1000 instructions
    io_bytes: int = 0
    instruction_mix: tuple[float, float, float, float, float] = (0.2, 0.2, 0.2, 0.2, 0.2)

    def __post_init__(self) -> None:
        for name in ("input_bytes", "flop_count", "io_bytes"):
            _check_nonneg_int(name, getattr(self, name))
        _check_nonneg_real("branching_factor", self.branching_factor)
        mix = tuple(float(v) for v in self.instruction_mix)
        if len(mix) != 5:
            raise ValidationError("instruction_mix must have 5 components")
        if any(not (0.0 <= v <= 1.0) for v in mix):
            raise ValidationError(f"instruction_mix components must lie in [0, 1]: {mix}")
        if abs(math.fsum(mix) - 1.0) > 1e-9:
            raise ValidationError(f"instruction_mix must sum to 1.0, got {math.fsum(mix)!r}")
        object.__setattr__(self, "instruction_mix", mix)

    def to_dict(self) -> dict:
        return {
            "input_bytes": self.input_bytes,
            "flop_count": self.flop_count,
            "branching_factor": self.branching_factor,
            "io_bytes": self.io_bytes,
            "instruction_mix": dict(zip(MIX_KEYS, self.instruction_mix)),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AppFeatures":
        mix = d.get("instruction_mix", dict(zip(MIX_KEYS, cls.instruction_mix)))
        if isinstance(mix, Mapping):
            try:
                mix = tuple(mix[k] for k in MIX_KEYS)
            except KeyError as exc:
                raise ParseError(f"instruction_mix missing {exc}") from None
        return cls(
            input_bytes=d.get("input_bytes", 0),
            flop_count=d.get("flop_count", 0),
            branching_factor=float(d.get("branching_factor", 0.0)),
            io_bytes=d.get("io_bytes", 0),
            instruction_mix=tuple(mix),
        )


@dataclass(frozen=True)
class StaticFeatures:
    cores: int
    cpu_mhz: float
    cache_kb: int
    mem_total_bytes: int
    disk_bw_bytes_per_s: float
    net_bw_bytes_per_s: float
    net_latency_s: float = 0.0

    def __post_init__(self) -> None:
        for name in ("cores", "cache_kb", "mem_total_bytes"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
        for name in ("cpu_mhz", "disk_bw_bytes_per_s", "net_bw_bytes_per_s"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive, got {value!r}")
            object.__setattr__(self, name, float(value))
        _check_nonneg_real("net_latency_s", self.net_latency_s)
        object.__setattr__(self, "net_latency_s", float(self.net_latency_s))

    def to_dict(self) -> dict:
        return {
            "cores": self.cores,
            "cpu_mhz": self.cpu_mhz,
            "cache_kb": self.cache_kb,
            "mem_total_bytes": self.mem_total_bytes,
            "disk_bw_bytes_per_s": self.disk_bw_bytes_per_s,
            "net_bw_bytes_per_s": self.net_bw_bytes_per_s,
            "net_latency_s": self.net_latency_s,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "StaticFeatures":
        try:
            return cls(**{k: d[k] for k in (
                "cores", "cpu_mhz", "cache_kb", "mem_total_bytes",
                "disk_bw_bytes_per_s", "net_bw_bytes_per_s", "net_latency_s")})
        except KeyError as exc:
            raise ParseError(f"static_features missing {exc}") from None


@dataclass(frozen=True)
class DynFeatures:
    jobs_running: int = 0
    queue_wait_s: float = 0.0
    load_average: float = 0.0
    mem_used_bytes: int = 0

    def __post_init__(self) -> None:
        _check_nonneg_int("jobs_running", self.jobs_running)
        _check_nonneg_int("mem_used_bytes", self.mem_used_bytes)
        _check_nonneg_real("queue_wait_s", self.queue_wait_s)
        _check_nonneg_real("load_average", self.load_average)
        object.__setattr__(self, "queue_wait_s", float(self.queue_wait_s))
        object.__setattr__(self, "load_average", float(self.load_average))

    def to_dict(self) -> dict:
        return {
            "jobs_running": self.jobs_running,
            "queue_wait_s": self.queue_wait_s,
            "load_average": self.load_average,
            "mem_used_bytes": self.mem_used_bytes,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DynFeatures":
        return cls(
            jobs_running=d.get("jobs_running", 0),
            queue_wait_s=d.get("queue_wait_s", 0.0),
            load_average=d.get("load_average", 0.0),
            mem_used_bytes=d.get("mem_used_bytes", 0),
        )


@dataclass(frozen=True)
class ResourceNode:
    id: str
    resource_class: str
    static_features: StaticFeatures

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "resource_class": self.resource_class,
            "static_features": self.static_features.to_dict(),
        }


@dataclass(frozen=True)
class TaskNode:
    id: str
    kind: TaskKind = TaskKind.ATOMIC
    app_features: AppFeatures | None = None
    body: "WorkflowSpec | None" = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError("task id must be a non-empty string")
        kind = TaskKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is TaskKind.ATOMIC:
            if self.app_features is None or self.body is not None:
                raise ValidationError(f"atomic task {self.id!r} needs app_features and no body")
        elif self.body is None or self.app_features is not None:
            raise ValidationError(f"sub-workflow task {self.id!r} needs a body and no app_features")

    @classmethod
    def atomic(cls, id: str, app: AppFeatures | None = None) -> "TaskNode":
        return cls(id, TaskKind.ATOMIC, app_features=app or AppFeatures())

    @classmethod
    def nested(cls, id: str, body: "WorkflowSpec") -> "TaskNode":
        return cls(id, TaskKind.SUBWORKFLOW, body=body)


@dataclass(frozen=True)
class DataEdge:
    src: str
    dst: str
    payload_bytes: int = 0

    def __post_init__(self) -> None:
        _check_nonneg_int("payload_bytes", self.payload_bytes)


@dataclass(frozen=True)
class WorkflowSpec:
    """A validated DAG of tasks. Construction checks every structural invariant."""

    name: str
    tasks: tuple[TaskNode, ...]
    edges: tuple[DataEdge, ...] = ()
    _order: tuple[str, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "_order", _validate(self))

    @property
    def task_ids(self) -> list[str]:
        return [t.id for t in self.tasks]

    def task(self, task_id: str) -> TaskNode:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def depth(self) -> int:
        """1 for a flat workflow, plus one per level of nesting."""
        inner = [t.body.depth() for t in self.tasks if t.body is not None]
        return 1 + max(inner, default=0)

    def sources(self) -> list[str]:
        has_pred = {e.dst for e in self.edges}
        return sorted(t.id for t in self.tasks if t.id not in has_pred)

    def sinks(self) -> list[str]:
        has_succ = {e.src for e in self.edges}
        return sorted(t.id for t in self.tasks if t.id not in has_succ)


def _check_nonneg_int(name: str, value: Any) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ValidationError(f"{name} must be a non-negative integer, got {value!r}")


def _check_nonneg_real(name: str, value: Any) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
        raise ValidationError(f"{name} must be a non-negative real, got {value!r}")


def _validate(w: WorkflowSpec, level: int = 1) -> tuple[str, ...]:
    if level > MAX_DEPTH:
        raise DepthError(f"nesting depth exceeds {MAX_DEPTH}")
    if not w.tasks:
        raise ValidationError(f"workflow {w.name!r} has no tasks")
    ids = [t.id for t in w.tasks]
    seen: set[str] = set()
    for tid in ids:
        if tid in seen:
            raise ValidationError(f"duplicate task id {tid!r} in workflow {w.name!r}")
        seen.add(tid)
    for e in w.edges:
        for end in (e.src, e.dst):
            if end not in seen:
                raise DanglingEdgeError(f"edge {e.src!r}->{e.dst!r} references unknown task {end!r}")
        if e.src == e.dst:
            raise CycleError(f"self-loop on {e.src!r}")
    # nested bodies were validated when constructed; re-check depth from this root
    for t in w.tasks:
        if t.body is not None and level + t.body.depth() > MAX_DEPTH:
            raise DepthError(f"nesting depth exceeds {MAX_DEPTH}")
    return tuple(_kahn(ids, [(e.src, e.dst) for e in w.edges]))


def _kahn(ids: Iterable[str], pairs: Iterable[tuple[str, str]]) -> list[str]:
    ids = list(ids)
    succ: dict[str, set[str]] = {i: set() for i in ids}
    indeg = dict.fromkeys(ids, 0)
    for u, v in pairs:
        if v not in succ[u]:
            succ[u].add(v)
            indeg[v] += 1
    heap = [i for i in ids if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, v)
    if len(order) != len(ids):
        stuck = sorted(i for i in ids if indeg[i] > 0)
        raise CycleError(f"cycle among tasks {stuck}")
    return order


def topo_order(w: WorkflowSpec) -> list[str]:
    """Topological order with ties broken by lexicographic task id."""
    return list(w._order)


def flatten(w: WorkflowSpec) -> WorkflowSpec:
    """Inline every sub-workflow; inner ids become ``parent/child``.

    Edges into a sub-workflow fan out to all of its (flattened) sources and
    edges out of it leave from all of its (flattened) sinks, keeping the outer
    payload.
    """
    if all(t.body is None for t in w.tasks):
        return w
    tasks: list[TaskNode] = []
    edges: list[DataEdge] = []
    entry: dict[str, list[str]] = {}
    exit_: dict[str, list[str]] = {}
    for t in w.tasks:
        if t.body is None:
            tasks.append(t)
            entry[t.id] = exit_[t.id] = [t.id]
            continue
        inner = flatten(t.body)
        prefix = t.id + "/"
        tasks.extend(TaskNode.atomic(prefix + it.id, it.app_features) for it in inner.tasks)
        edges.extend(DataEdge(prefix + e.src, prefix + e.dst, e.payload_bytes) for e in inner.edges)
        entry[t.id] = [prefix + s for s in inner.sources()]
        exit_[t.id] = [prefix + s for s in inner.sinks()]
    for e in w.edges:
        for u in exit_[e.src]:
            for v in entry[e.dst]:
                edges.append(DataEdge(u, v, e.payload_bytes))
    return WorkflowSpec(w.name, tuple(tasks), tuple(edges))


# -- JSON documents ---------------------------------------------------------


def _workflow_to_dict(w: WorkflowSpec) -> dict:
    tasks = []
    for t in w.tasks:
        entry: dict[str, Any] = {"id": t.id, "kind": t.kind.value}
        if t.body is not None:
            entry["body"] = _workflow_to_dict(t.body)
        else:
            entry["app_features"] = t.app_features.to_dict()
        tasks.append(entry)
    edges = [{"from": e.src, "to": e.dst, "payload_bytes": e.payload_bytes} for e in w.edges]
    return {"name": w.name, "tasks": tasks, "edges": edges}


def workflow_to_dict(w: WorkflowSpec) -> dict:
    return {"v": SCHEMA_VERSION, **_workflow_to_dict(w)}


def serialize_workflow(w: WorkflowSpec) -> str:
    return json.dumps(workflow_to_dict(w), indent=2) + "\n"


def _workflow_from_dict(d: Any, level: int) -> WorkflowSpec:
    if level > MAX_DEPTH:
        raise DepthError(f"nesting depth exceeds {MAX_DEPTH}")
    if not isinstance(d, Mapping):
        raise ParseError("workflow must be a JSON object")
    try:
        name = d["name"]
        raw_tasks = d["tasks"]
    except KeyError as exc:
        raise ParseError(f"workflow missing field {exc}") from None
    if not isinstance(name, str) or not isinstance(raw_tasks, list):
        raise ParseError("workflow 'name' must be a string and 'tasks' a list")
    raw_edges = d.get("edges", [])
    if not isinstance(raw_edges, list):
        raise ParseError("'edges' must be a list")
    tasks = []
    for rt in raw_tasks:
        if not isinstance(rt, Mapping) or "id" not in rt:
            raise ParseError(f"malformed task entry: {rt!r}")
        kind = rt.get("kind", "atomic")
        try:
            kind = TaskKind(kind)
        except ValueError:
            raise ParseError(f"unknown task kind {kind!r}") from None
        if kind is TaskKind.ATOMIC:
            if "body" in rt:
                raise ParseError(f"atomic task {rt['id']!r} must not carry a body")
            feats = rt.get("app_features")
            if not isinstance(feats, Mapping):
                raise ParseError(f"atomic task {rt['id']!r} needs app_features")
            tasks.append(TaskNode(rt["id"], kind, app_features=AppFeatures.from_dict(feats)))
        else:
            if "app_features" in rt or "body" not in rt:
                raise ParseError(f"sub-workflow task {rt['id']!r} needs a body only")
            tasks.append(TaskNode(rt["id"], kind, body=_workflow_from_dict(rt["body"], level + 1)))
    edges = []
    for re_ in raw_edges:
        try:
            edges.append(DataEdge(re_["from"], re_["to"], re_.get("payload_bytes", 0)))
        except (KeyError, TypeError):
            raise ParseError(f"malformed edge entry: {re_!r}") from None
    return WorkflowSpec(name, tuple(tasks), tuple(edges))


def _load_versioned(text: str | bytes) -> dict:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("document must be a JSON object")
    if doc.get("v") != SCHEMA_VERSION:
        raise ParseError(f"unsupported or missing schema version: {doc.get('v')!r}")
    return doc


def workflow_from_dict(doc: Mapping[str, Any]) -> WorkflowSpec:
    if doc.get("v") != SCHEMA_VERSION:
        raise ParseError(f"unsupported or missing schema version: {doc.get('v')!r}")
    try:
        return _workflow_from_dict(doc, 1)
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc)) from None


def parse_workflow(text: str | bytes) -> WorkflowSpec:
    """Parse and validate a workflow JSON document."""
    return workflow_from_dict(_load_versioned(text))


def parse_cluster(text: str | bytes) -> list[ResourceNode]:
    doc = _load_versioned(text)
    nodes_raw = doc.get("nodes")
    if not isinstance(nodes_raw, list) or not nodes_raw:
        raise ParseError("cluster needs a non-empty 'nodes' list")
    nodes = []
    for nd in nodes_raw:
        try:
            nodes.append(ResourceNode(
                str(nd["id"]), str(nd["resource_class"]),
                StaticFeatures.from_dict(nd["static_features"])))
        except (KeyError, TypeError):
            raise ParseError(f"malformed cluster node: {nd!r}") from None
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate node ids in cluster")
    return nodes


def serialize_cluster(nodes: Iterable[ResourceNode]) -> str:
    return json.dumps({"v": SCHEMA_VERSION, "nodes": [n.to_dict() for n in nodes]}, indent=2) + "\n"
