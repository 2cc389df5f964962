"""Predicted Temporal Graphs: composing per-step agent predictions over a PREP.

Timing follows synchronous data flow. A step starts once every predecessor
has finished and its data has arrived. Steps placed on the same node may
overlap in time; contention is expressed only through each step's dynamic
features. ``io_time_s`` is treated as part of ``exec_time_s`` for scheduling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import UnresolvedAlternativesError
from .learning.features import featurize, featurize_transfer
from .learning.registry import AgentRegistry
from .planner import DEFAULT_EXPLOSION_CAP, PREP, Policy, plan, resolve_alternatives
from .records import MetricKind, MetricVector
from .workflow import SCHEMA_VERSION, DynFeatures, ResourceNode, WorkflowSpec, _kahn

_NEG = float("-inf")


@dataclass(frozen=True)
class StepTiming:
    step_id: str
    node_id: str
    metrics: MetricVector
    start_s: float
    finish_s: float
    fallback: bool = False


@dataclass(frozen=True)
class TransferTiming:
    from_step: str
    to_step: str
    payload_bytes: int
    same_node: bool
    transfer_s: float
    fallback: bool = False


@dataclass(frozen=True)
class PredictedTemporalGraph:
    steps: tuple[StepTiming, ...]
    transfers: tuple[TransferTiming, ...]
    makespan_s: float
    peak_mem_bytes: Mapping[str, int]
    total_transfer_s: float
    critical_path: tuple[str, ...]
    nested: Mapping[str, "PredictedTemporalGraph"] = field(default_factory=dict)

    def step(self, step_id: str) -> StepTiming:
        for s in self.steps:
            if s.step_id == step_id:
                return s
        raise KeyError(step_id)

    @property
    def fallback_used(self) -> bool:
        return any(s.fallback for s in self.steps) or any(t.fallback for t in self.transfers)

    def to_dict(self) -> dict:
        d = {
            "v": SCHEMA_VERSION,
            "steps": [
                {
                    "id": s.step_id,
                    "node": s.node_id,
                    "start_s": s.start_s,
                    "finish_s": s.finish_s,
                    "metrics": s.metrics.to_dict(),
                    "fallback": s.fallback,
                }
                for s in self.steps
            ],
            "transfers": [
                {
                    "from": t.from_step,
                    "to": t.to_step,
                    "payload_bytes": t.payload_bytes,
                    "same_node": t.same_node,
                    "transfer_s": t.transfer_s,
                    "fallback": t.fallback,
                }
                for t in self.transfers
            ],
            "aggregates": {
                "makespan_s": self.makespan_s,
                "peak_mem_bytes": dict(sorted(self.peak_mem_bytes.items())),
                "total_transfer_s": self.total_transfer_s,
            },
            "critical_path": list(self.critical_path),
        }
        if self.nested:
            d["nested"] = {k: v.to_dict() for k, v in sorted(self.nested.items())}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


# -- pure scheduling core -------------------------------------------------------


def longest_path_times(
    step_ids: Sequence[str],
    exec_s: Mapping[str, float],
    edges: Sequence[tuple[str, str, float]],
) -> tuple[dict[str, float], dict[str, float], list[str]]:
    """Start and finish times of every step plus a topological order.

    ``edges`` are ``(from, to, transfer_s)``; sources start at 0 and each
    other step at ``max(finish(pred) + transfer)``.
    """
    order = _kahn(step_ids, [(u, v) for u, v, _ in edges])
    incoming: dict[str, list[tuple[str, float]]] = {s: [] for s in step_ids}
    for u, v, t in edges:
        incoming[v].append((u, t))
    start: dict[str, float] = {}
    finish: dict[str, float] = {}
    for s in order:
        start[s] = max((finish[u] + t for u, t in incoming[s]), default=0.0)
        finish[s] = start[s] + exec_s[s]
    return start, finish, order


def critical_path(
    start: Mapping[str, float],
    finish: Mapping[str, float],
    edges: Sequence[tuple[str, str, float]],
) -> list[str]:
    """Back-track from the latest-finishing step through tight predecessors.

    Ties (equal finish times, or several predecessors realizing the start
    time) go to the lexicographically smallest step id.
    """
    if not finish:
        return []
    incoming: dict[str, list[tuple[str, float]]] = {s: [] for s in finish}
    for u, v, t in edges:
        incoming[v].append((u, t))
    makespan = max(finish.values())
    current = min(s for s, f in finish.items() if f == makespan)
    path = [current]
    while True:
        tight = sorted(u for u, t in incoming[current] if finish[u] + t == start[current])
        if not tight:
            break
        current = tight[0]
        path.append(current)
    path.reverse()
    return path


def peak_memory(
    intervals: Sequence[tuple[str, float, float, int]],
) -> dict[str, int]:
    """Per-node maximum of summed ``mem`` over steps resident at the same instant.

    ``intervals`` are ``(node, start, finish, mem)`` occupying
    ``[start, finish)``; a zero-length step occupies its single instant.
    """
    by_node: dict[str, list[tuple[float, float, int]]] = {}
    for node, s, f, mem in intervals:
        by_node.setdefault(node, []).append((s, f, mem))
    peaks = {}
    for node, items in by_node.items():
        best = 0
        for t in sorted({s for s, _, _ in items}):
            resident = sum(m for s, f, m in items if s <= t < f or s == t == f)
            best = max(best, resident)
        peaks[node] = best
    return peaks


# -- agent predictions ----------------------------------------------------------


@dataclass(frozen=True)
class _Predicted:
    metrics: dict[str, MetricVector]
    step_fallback: dict[str, bool]
    transfer_s: dict[tuple[str, str], float]
    transfer_fallback: dict[tuple[str, str], bool]


def _predict(p: PREP, registry: AgentRegistry) -> _Predicted:
    if not p.is_concrete or any(s.node_id is None for s in p.steps):
        raise UnresolvedAlternativesError("PREP still has alternative groups; resolve them first")
    nodes = {n.id: n for n in p.nodes}
    metrics: dict[str, MetricVector] = {}
    step_fb: dict[str, bool] = {}
    for s in p.steps:
        node = p.node(s.node_id)
        row = featurize(s.app_features, node.static_features, s.dyn_features)
        vals = {}
        fb = False
        for m in (MetricKind.EXEC_TIME, MetricKind.MEM_PEAK, MetricKind.MEM_AVG, MetricKind.IO_TIME):
            pred = registry.predict(node.resource_class, m, row)
            vals[m] = pred.value
            fb |= pred.fallback
        mem_peak = round(vals[MetricKind.MEM_PEAK])
        metrics[s.task_id] = MetricVector(
            exec_time_s=vals[MetricKind.EXEC_TIME],
            mem_peak_bytes=mem_peak,
            # agents are independent, so the average is capped at the peak
            mem_avg_bytes=min(round(vals[MetricKind.MEM_AVG]), mem_peak),
            io_time_s=vals[MetricKind.IO_TIME],
        )
        step_fb[s.task_id] = fb
    transfer_s: dict[tuple[str, str], float] = {}
    transfer_fb: dict[tuple[str, str], bool] = {}
    for t in p.transfers:
        key = (t.from_step, t.to_step)
        src, dst = nodes[p.step(t.from_step).node_id], nodes[p.step(t.to_step).node_id]
        if src.id == dst.id:
            transfer_s[key], transfer_fb[key] = 0.0, False
            continue
        row = featurize_transfer(t.payload_bytes, src.static_features, dst.static_features)
        pred = registry.predict(dst.resource_class, MetricKind.NET_TRANSFER, row)
        transfer_s[key], transfer_fb[key] = pred.value, pred.fallback
    # a step's own network metric is the data it waits for
    for (u, v), secs in transfer_s.items():
        m = metrics[v]
        metrics[v] = MetricVector(m.exec_time_s, m.mem_peak_bytes, m.mem_avg_bytes, m.io_time_s,
                                  m.net_transfer_s + secs)
    return _Predicted(metrics, step_fb, transfer_s, transfer_fb)


def _assemble(p: PREP, pred: _Predicted) -> PredictedTemporalGraph:
    ids = [s.task_id for s in p.steps]
    edges = [(t.from_step, t.to_step, pred.transfer_s[(t.from_step, t.to_step)]) for t in p.transfers]
    exec_s = {i: pred.metrics[i].exec_time_s for i in ids}
    start, finish, order = longest_path_times(ids, exec_s, edges)
    node_of = p.assignment()
    steps = tuple(
        StepTiming(i, node_of[i], pred.metrics[i], start[i], finish[i], pred.step_fallback[i]) for i in order
    )
    transfers = tuple(
        TransferTiming(t.from_step, t.to_step, t.payload_bytes, node_of[t.from_step] == node_of[t.to_step],
                       pred.transfer_s[(t.from_step, t.to_step)], pred.transfer_fallback[(t.from_step, t.to_step)])
        for t in p.transfers
    )
    peaks = peak_memory([(node_of[i], start[i], finish[i], pred.metrics[i].mem_peak_bytes) for i in ids])
    return PredictedTemporalGraph(
        steps=steps,
        transfers=transfers,
        makespan_s=max(finish.values()),
        peak_mem_bytes=peaks,
        total_transfer_s=sum(t.transfer_s for t in transfers),
        critical_path=tuple(critical_path(start, finish, edges)),
    )


def compose(p: PREP, registry: AgentRegistry) -> PredictedTemporalGraph:
    """Predict every step and transfer of a concrete PREP and lay them out in time."""
    return _assemble(p, _predict(p, registry))


def compare_alternatives(
    p: PREP, registry: AgentRegistry, cap: int = DEFAULT_EXPLOSION_CAP
) -> list[tuple[PREP, PredictedTemporalGraph]]:
    """All concrete PREPs ranked by makespan, then total transfer, then assignment."""
    ranked = []
    for concrete in resolve_alternatives(p, cap):
        graph = compose(concrete, registry)
        assignment = tuple(sorted(concrete.assignment().items()))
        ranked.append(((graph.makespan_s, graph.total_transfer_s, assignment), concrete, graph))
    ranked.sort(key=lambda item: item[0])
    return [(concrete, graph) for _, concrete, graph in ranked]


# -- nested workflows -----------------------------------------------------------


@dataclass
class _Summary:
    """What the enclosing level sees of a (sub-)workflow.

    ``entries``/``exits`` are the flattened ids of its source/sink atomic
    steps. ``span[(e, x)]`` is the longest path from the start of entry ``e``
    to the finish of exit ``x`` (missing when ``x`` is unreachable from
    ``e``).
    """

    entries: list[str]
    exits: list[str]
    span: dict[tuple[str, str], float]

    @property
    def makespan(self) -> float:
        return max(self.span.values())


def _propagate(
    w: WorkflowSpec,
    prefix: str,
    summaries: Mapping[str, _Summary],
    transfer_s: Mapping[tuple[str, str], float],
    released: Mapping[str, float],
) -> tuple[dict[str, float], dict[str, float]]:
    """Arrival time at every entry port and finish time at every exit port of
    the tasks of ``w``, given release times for some of its entry ports."""
    incoming: dict[str, list[str]] = {t.id: [] for t in w.tasks}
    for e in w.edges:
        incoming[e.dst].append(e.src)
    arrive: dict[str, float] = {}
    fin: dict[str, float] = {}
    for tid in w._order:
        summ = summaries[prefix + tid]
        for port in summ.entries:
            if port in released:
                arrive[port] = released[port]
                continue
            best = _NEG
            for u in incoming[tid]:
                for x in summaries[prefix + u].exits:
                    if x in fin:
                        best = max(best, fin[x] + transfer_s[(x, port)])
            if best > _NEG:
                arrive[port] = best
        for x in summ.exits:
            best = _NEG
            for port in summ.entries:
                if port in arrive and (port, x) in summ.span:
                    best = max(best, arrive[port] + summ.span[(port, x)])
            if best > _NEG:
                fin[x] = best
    return arrive, fin


def _summarize(
    w: WorkflowSpec,
    prefix: str,
    exec_s: Mapping[str, float],
    transfer_s: Mapping[tuple[str, str], float],
    summaries: dict[str, _Summary],
) -> _Summary:
    """Bottom-up: summarize every child first, then this level from the
    children's summaries alone."""
    for t in w.tasks:
        key = prefix + t.id
        if t.body is None:
            summaries[key] = _Summary([key], [key], {(key, key): exec_s[key]})
        else:
            summaries[key] = _summarize(t.body, key + "/", exec_s, transfer_s, summaries)
    entries = sorted(p for s in w.sources() for p in summaries[prefix + s].entries)
    exits = sorted(p for s in w.sinks() for p in summaries[prefix + s].exits)
    span: dict[tuple[str, str], float] = {}
    for e in entries:
        _, fin = _propagate(w, prefix, summaries, transfer_s, {e: 0.0})
        for x in exits:
            if x in fin:
                span[(e, x)] = fin[x]
    return _Summary(entries, exits, span)


def _realize(
    w: WorkflowSpec,
    prefix: str,
    summaries: Mapping[str, _Summary],
    transfer_s: Mapping[tuple[str, str], float],
    released: Mapping[str, float],
    out_start: dict[str, float],
    out_finish: dict[str, float],
    level_times: dict[str, tuple[float, float]],
) -> None:
    """Top-down: absolute start/finish of every atomic step, for reporting."""
    arrive, fin = _propagate(w, prefix, summaries, transfer_s, released)
    for t in w.tasks:
        key = prefix + t.id
        summ = summaries[key]
        begin = min(arrive[p] for p in summ.entries)
        end = max(fin[x] for x in summ.exits)
        level_times[key] = (begin, end)
        if t.body is None:
            out_start[key], out_finish[key] = arrive[key], fin[key]
        else:
            inner_release = {p: arrive[p] for p in summ.entries}
            _realize(t.body, key + "/", summaries, transfer_s, inner_release, out_start, out_finish, level_times)


def compose_nested(
    w: WorkflowSpec,
    cluster: Sequence[ResourceNode],
    policy: Policy,
    registry: AgentRegistry,
    dyn: Mapping[str, DynFeatures] | None = None,
) -> PredictedTemporalGraph:
    """Compose a nested workflow bottom-up.

    Each sub-workflow is reduced to a summary: its entry and exit steps plus
    the longest path between every entry/exit pair. The enclosing level is
    scheduled from those summaries alone. Boundary edges carry the outer
    payloads. In the returned graph each sub-workflow appears as one
    collapsed step. Its exec time is the inner makespan, its peak memory is
    the largest inner per-node peak, and its inner graph is kept under
    ``nested``. The aggregates cover every atomic step.
    """
    prep = plan(w, cluster, policy, dyn)
    pred = _predict(prep, registry)
    exec_s = {i: m.exec_time_s for i, m in pred.metrics.items()}

    summaries: dict[str, _Summary] = {}
    top = _summarize(w, "", exec_s, pred.transfer_s, summaries)
    makespan = top.makespan

    start: dict[str, float] = {}
    finish: dict[str, float] = {}
    level_times: dict[str, tuple[float, float]] = {}
    _realize(w, "", summaries, pred.transfer_s, {e: 0.0 for e in top.entries}, start, finish, level_times)

    flat_graph = _assemble(prep, pred)
    edges = [(u, v, s) for (u, v), s in pred.transfer_s.items()]
    node_of = prep.assignment()
    peaks = peak_memory([(node_of[i], start[i], finish[i], pred.metrics[i].mem_peak_bytes) for i in start])

    return _collapse(w, "", prep, pred, summaries, level_times, flat_graph, makespan, peaks,
                     tuple(critical_path(start, finish, edges)))


def _collapse(
    w: WorkflowSpec,
    prefix: str,
    prep: PREP,
    pred: _Predicted,
    summaries: Mapping[str, _Summary],
    level_times: Mapping[str, tuple[float, float]],
    flat_graph: PredictedTemporalGraph,
    makespan: float,
    peaks: Mapping[str, int],
    crit: tuple[str, ...],
) -> PredictedTemporalGraph:
    node_of = prep.assignment()
    steps = []
    nested = {}
    inner_keys: dict[str, list[str]] = {}
    for tid in w._order:
        key = prefix + tid
        begin, end = level_times[key]
        t = w.task(tid)
        if t.body is None:
            steps.append(StepTiming(key, node_of[key], pred.metrics[key], begin, end, pred.step_fallback[key]))
            inner_keys[key] = [key]
            continue
        members = sorted(k for k in pred.metrics if k.startswith(key + "/"))
        inner_keys[key] = members
        inner = _inner_graph(t.body, key + "/", prep, pred, summaries, members)
        nested[key] = inner
        nodes = sorted({node_of[k] for k in members})
        steps.append(StepTiming(
            key,
            nodes[0] if len(nodes) == 1 else ",".join(nodes),
            MetricVector(
                exec_time_s=inner.makespan_s,
                mem_peak_bytes=max(inner.peak_mem_bytes.values()),
                mem_avg_bytes=min(max(pred.metrics[k].mem_avg_bytes for k in members),
                                  max(inner.peak_mem_bytes.values())),
                io_time_s=sum(pred.metrics[k].io_time_s for k in members),
                net_transfer_s=inner.total_transfer_s,
            ),
            begin,
            end,
            any(pred.step_fallback[k] for k in members),
        ))
    members_all = {k for ks in inner_keys.values() for k in ks}
    transfers = tuple(t for t in flat_graph.transfers if t.from_step in members_all and t.to_step in members_all)
    return PredictedTemporalGraph(
        steps=tuple(steps),
        transfers=transfers,
        makespan_s=makespan,
        peak_mem_bytes=dict(peaks),
        total_transfer_s=sum(t.transfer_s for t in transfers),
        critical_path=crit,
        nested=nested,
    )


def _inner_graph(
    body: WorkflowSpec,
    prefix: str,
    prep: PREP,
    pred: _Predicted,
    summaries: Mapping[str, _Summary],
    members: list[str],
) -> PredictedTemporalGraph:
    """The sub-workflow composed on its own, every entry released at 0."""
    start: dict[str, float] = {}
    finish: dict[str, float] = {}
    level_times: dict[str, tuple[float, float]] = {}
    entries = sorted(p for s in body.sources() for p in summaries[prefix + s].entries)
    _realize(body, prefix, summaries, pred.transfer_s, {e: 0.0 for e in entries}, start, finish, level_times)
    member_set = set(members)
    edges = [(u, v, s) for (u, v), s in pred.transfer_s.items() if u in member_set and v in member_set]
    node_of = prep.assignment()
    peaks = peak_memory([(node_of[i], start[i], finish[i], pred.metrics[i].mem_peak_bytes) for i in members])
    inner_span = max(finish.values())
    flat_like = PredictedTemporalGraph((), tuple(
        TransferTiming(u, v, prep_payload(prep, u, v), node_of[u] == node_of[v], s, pred.transfer_fallback[(u, v)])
        for u, v, s in edges
    ), 0.0, {}, 0.0, ())
    return _collapse(body, prefix, prep, pred, summaries, level_times, flat_like, inner_span, peaks,
                     tuple(critical_path(start, finish, edges)))


def prep_payload(p: PREP, u: str, v: str) -> int:
    for t in p.transfers:
        if t.from_step == u and t.to_step == v:
            return t.payload_bytes
    raise KeyError((u, v))

