"""Physical Resource Execution Plans: binding a workflow to cluster nodes."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

from .errors import ExplosionError, ParseError, UncoveredTaskError, UnknownNodeError, ValidationError
from .workflow import (
    SCHEMA_VERSION,
    AppFeatures,
    DynFeatures,
    ResourceNode,
    StaticFeatures,
    WorkflowSpec,
    flatten,
    topo_order,
)

DEFAULT_EXPLOSION_CAP = 10_000


@dataclass(frozen=True)
class Explicit:
    mapping: Mapping[str, str]


@dataclass(frozen=True)
class RoundRobin:
    pass


@dataclass(frozen=True)
class AllCandidates:
    pass


Policy = Explicit | RoundRobin | AllCandidates


@dataclass(frozen=True)
class PrepStep:
    task_id: str
    node_id: str | None  # None while the task sits in an unresolved AlternativeGroup
    app_features: AppFeatures
    dyn_features: DynFeatures = field(default_factory=DynFeatures)


@dataclass(frozen=True)
class TransferEdge:
    from_step: str
    to_step: str
    payload_bytes: int
    same_node: bool | None  # None while either endpoint is unresolved


@dataclass(frozen=True)
class AlternativeGroup:
    task_id: str
    candidate_node_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidate_node_ids", tuple(self.candidate_node_ids))
        if not self.candidate_node_ids:
            raise ValidationError(f"alternative group for {self.task_id!r} has no candidates")


@dataclass(frozen=True)
class PREP:
    """Steps in topological order, transfer edges, open choices and the cluster."""

    steps: tuple[PrepStep, ...]
    transfers: tuple[TransferEdge, ...]
    alternatives: tuple[AlternativeGroup, ...]
    nodes: tuple[ResourceNode, ...]

    @property
    def is_concrete(self) -> bool:
        return not self.alternatives

    def node(self, node_id: str) -> ResourceNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise UnknownNodeError(node_id)

    def step(self, task_id: str) -> PrepStep:
        for s in self.steps:
            if s.task_id == task_id:
                return s
        raise KeyError(task_id)

    def assignment(self) -> dict[str, str | None]:
        return {s.task_id: s.node_id for s in self.steps}


def _mirror_transfers(flat: WorkflowSpec, assignment: Mapping[str, str | None]) -> tuple[TransferEdge, ...]:
    out = []
    for e in flat.edges:
        a, b = assignment[e.src], assignment[e.dst]
        same = None if a is None or b is None else a == b
        out.append(TransferEdge(e.src, e.dst, e.payload_bytes, same))
    return tuple(out)


def plan(
    w: WorkflowSpec,
    cluster: Sequence[ResourceNode],
    policy: Policy,
    dyn: Mapping[str, DynFeatures] | None = None,
) -> PREP:
    """Bind the flattened workflow to ``cluster`` under ``policy``.

    ``dyn`` gives the assumed contention per flattened task id; missing
    entries default to an idle node.
    """
    if not cluster:
        raise ValidationError("cluster must contain at least one node")
    node_ids = [n.id for n in cluster]
    known = set(node_ids)
    flat = flatten(w)
    order = topo_order(flat)
    dyn = dyn or {}

    alternatives: list[AlternativeGroup] = []
    if isinstance(policy, Explicit):
        missing = sorted(set(order) - set(policy.mapping))
        if missing:
            raise UncoveredTaskError(f"explicit mapping misses tasks {missing}")
        assignment = {t: policy.mapping[t] for t in order}
        for t, n in assignment.items():
            if n not in known:
                raise UnknownNodeError(f"task {t!r} mapped to unknown node {n!r}")
    elif isinstance(policy, RoundRobin):
        assignment = {t: node_ids[i % len(node_ids)] for i, t in enumerate(order)}
    elif isinstance(policy, AllCandidates):
        assignment = dict.fromkeys(order)
        alternatives = [AlternativeGroup(t, tuple(node_ids)) for t in sorted(order)]
    else:
        raise TypeError(f"unknown policy {policy!r}")

    steps = tuple(
        PrepStep(t, assignment[t], flat.task(t).app_features, dyn.get(t, DynFeatures()))
        for t in order
    )
    return PREP(steps, _mirror_transfers(flat, assignment), tuple(alternatives), tuple(cluster))


def count_alternatives(p: PREP) -> int:
    return math.prod(len(g.candidate_node_ids) for g in p.alternatives)


def resolve_alternatives(p: PREP, cap: int = DEFAULT_EXPLOSION_CAP) -> list[PREP]:
    """Every concrete PREP in the cartesian product of the alternative groups.

    Enumeration is lexicographic: groups ordered by task id, candidates by
    node id.
    """
    if p.is_concrete:
        return [p]
    total = count_alternatives(p)
    if total > cap:
        raise ExplosionError(f"{total} alternative PREPs exceed the cap of {cap}")
    groups = sorted(p.alternatives, key=lambda g: g.task_id)
    known = {n.id for n in p.nodes}
    for g in groups:
        unknown = sorted(set(g.candidate_node_ids) - known)
        if unknown:
            raise UnknownNodeError(f"alternatives for {g.task_id!r} name unknown nodes {unknown}")
    base = p.assignment()
    edges = [(t.from_step, t.to_step, t.payload_bytes) for t in p.transfers]
    out = []
    for combo in itertools.product(*(sorted(g.candidate_node_ids) for g in groups)):
        assignment = dict(base)
        for g, node_id in zip(groups, combo):
            assignment[g.task_id] = node_id
        steps = tuple(replace(s, node_id=assignment[s.task_id]) for s in p.steps)
        transfers = tuple(
            TransferEdge(u, v, b, assignment[u] == assignment[v]) for u, v, b in edges
        )
        out.append(PREP(steps, transfers, (), p.nodes))
    return out


# -- JSON ---------------------------------------------------------------------


def prep_to_dict(p: PREP) -> dict:
    return {
        "v": SCHEMA_VERSION,
        "steps": [
            {
                "task_id": s.task_id,
                "node_id": s.node_id,
                "app_features": s.app_features.to_dict(),
                "dyn_features": s.dyn_features.to_dict(),
            }
            for s in p.steps
        ],
        "transfers": [
            {"from": t.from_step, "to": t.to_step, "payload_bytes": t.payload_bytes, "same_node": t.same_node}
            for t in p.transfers
        ],
        "alternatives": [
            {"task_id": g.task_id, "candidate_node_ids": list(g.candidate_node_ids)} for g in p.alternatives
        ],
        "nodes": [n.to_dict() for n in p.nodes],
    }


def serialize_prep(p: PREP) -> str:
    return json.dumps(prep_to_dict(p), indent=2) + "\n"


def prep_from_dict(doc: Mapping[str, Any]) -> PREP:
    if doc.get("v") != SCHEMA_VERSION:
        raise ParseError(f"unsupported or missing schema version: {doc.get('v')!r}")
    try:
        nodes = tuple(
            ResourceNode(n["id"], n["resource_class"], StaticFeatures.from_dict(n["static_features"]))
            for n in doc.get("nodes", [])
        )
        steps = tuple(
            PrepStep(
                s["task_id"],
                s.get("node_id"),
                AppFeatures.from_dict(s["app_features"]),
                DynFeatures.from_dict(s.get("dyn_features", {})),
            )
            for s in doc["steps"]
        )
        transfers = tuple(
            TransferEdge(t["from"], t["to"], t.get("payload_bytes", 0), t.get("same_node"))
            for t in doc.get("transfers", [])
        )
        alternatives = tuple(
            AlternativeGroup(g["task_id"], tuple(g["candidate_node_ids"])) for g in doc.get("alternatives", [])
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed PREP document: {exc}") from None
    p = PREP(steps, transfers, alternatives, nodes)
    _check_prep(p)
    return p


def parse_prep(text: str | bytes) -> PREP:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("PREP document must be a JSON object")
    return prep_from_dict(doc)


def _check_prep(p: PREP) -> None:
    ids = [s.task_id for s in p.steps]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate step ids in PREP")
    known_nodes = {n.id for n in p.nodes}
    in_groups = {g.task_id for g in p.alternatives}
    for s in p.steps:
        if s.node_id is None:
            if s.task_id not in in_groups:
                raise ValidationError(f"step {s.task_id!r} has no node and no alternatives")
        elif s.node_id not in known_nodes:
            raise UnknownNodeError(f"step {s.task_id!r} on unknown node {s.node_id!r}")
    id_set = set(ids)
    for t in p.transfers:
        if t.from_step not in id_set or t.to_step not in id_set:
            raise ValidationError(f"transfer {t.from_step!r}->{t.to_step!r} names an unknown step")
