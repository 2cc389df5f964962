import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prepcast.errors import CycleError, DanglingEdgeError, DepthError, ParseError, ValidationError
from prepcast.mtga import mtga_workflow
from prepcast.workflow import (
    MAX_DEPTH,
    AppFeatures,
    DataEdge,
    TaskNode,
    WorkflowSpec,
    flatten,
    parse_cluster,
    parse_workflow,
    serialize_cluster,
    serialize_workflow,
    topo_order,
)

from conftest import nodes, random_dag, random_nested


def doc(tasks, edges=(), **extra):
    return json.dumps({"v": 1, "name": "w", "tasks": tasks, "edges": list(edges), **extra})


def atomic(tid):
    return {"id": tid, "kind": "atomic", "app_features": {"input_bytes": 1, "flop_count": 2}}


def test_single_task():
    w = parse_workflow(doc([atomic("qc")]))
    assert len(w.tasks) == 1
    assert topo_order(w) == ["qc"]


def test_mtga_chain_is_valid_dag():
    w = parse_workflow(serialize_workflow(mtga_workflow()))
    assert len(w.tasks) == 8
    order = topo_order(w)
    assert order[0] == "qc"
    assert order.index("remove_duplicates") < order.index("mapping")
    assert order.index("orf_call") < order.index("annotation_kegg")


def test_two_cycle_rejected():
    with pytest.raises(CycleError):
        parse_workflow(doc([atomic("A"), atomic("B")], [{"from": "A", "to": "B"}, {"from": "B", "to": "A"}]))


def test_self_loop_rejected():
    with pytest.raises(CycleError):
        parse_workflow(doc([atomic("A")], [{"from": "A", "to": "A"}]))


def test_dangling_edge():
    with pytest.raises(DanglingEdgeError):
        parse_workflow(doc([atomic("A")], [{"from": "A", "to": "ghost"}]))


@pytest.mark.parametrize("text", [
    "not json",
    json.dumps([1, 2]),
    json.dumps({"name": "w", "tasks": []}),  # no version
    json.dumps({"v": 2, "name": "w", "tasks": []}),
    json.dumps({"v": 1, "tasks": []}),
    doc([{"id": "A", "kind": "weird", "app_features": {}}]),
    doc([{"id": "A", "kind": "atomic"}]),
    doc([{"id": "A", "kind": "subworkflow"}]),
    doc([atomic("A")], [{"to": "A"}]),
])
def test_malformed_documents(text):
    with pytest.raises(ParseError):
        parse_workflow(text)


def test_duplicate_ids_rejected():
    with pytest.raises(ValidationError):
        parse_workflow(doc([atomic("A"), atomic("A")]))


def test_instruction_mix_must_sum_to_one():
    with pytest.raises(ValidationError):
        AppFeatures(instruction_mix=(0.5, 0.5, 0.5, 0.0, 0.0))
    with pytest.raises(ValidationError):
        AppFeatures(instruction_mix=(1.2, -0.2, 0.0, 0.0, 0.0))
    AppFeatures(instruction_mix=(0.1, 0.2, 0.3, 0.3, 0.1))


def test_negative_features_rejected():
    with pytest.raises(ValidationError):
        AppFeatures(input_bytes=-1)
    with pytest.raises(ValidationError):
        DataEdge("a", "b", -5)


def test_kind_body_consistency():
    with pytest.raises(ValidationError):
        TaskNode("x", "atomic")
    body = WorkflowSpec("b", (TaskNode.atomic("y"),))
    with pytest.raises(ValidationError):
        TaskNode("x", "subworkflow", app_features=AppFeatures(), body=body)


def test_topo_diamond_lexicographic():
    w = WorkflowSpec("d", tuple(TaskNode.atomic(i) for i in "DCBA"),
                     (DataEdge("A", "B"), DataEdge("A", "C"), DataEdge("B", "D"), DataEdge("C", "D")))
    assert topo_order(w) == ["A", "B", "C", "D"]


def _reachable(ids, edges):
    reach = {i: {i} for i in ids}
    changed = True
    while changed:
        changed = False
        for e in edges:
            new = reach[e.dst] - reach[e.src]
            if new:
                reach[e.src] |= new
                changed = True
    return reach


@pytest.mark.parametrize("seed", range(20))
def test_topo_respects_reachability(seed):
    rng = random.Random(seed)
    w = random_dag(rng, n_max=12)
    order = topo_order(w)
    assert sorted(order) == sorted(w.task_ids)
    reach = _reachable(w.task_ids, w.edges)
    pos = {t: i for i, t in enumerate(order)}
    for u in w.task_ids:
        for v in reach[u] - {u}:
            assert pos[u] < pos[v]


def test_flatten_identity_without_nesting():
    w = mtga_workflow()
    assert flatten(w) == w


def test_flatten_two_task_chain():
    body = WorkflowSpec("x", (TaskNode.atomic("X1"), TaskNode.atomic("X2")), (DataEdge("X1", "X2", 7),))
    w = WorkflowSpec("o", (TaskNode.atomic("A"), TaskNode.nested("X", body)), (DataEdge("A", "X", 3),))
    flat = flatten(w)
    assert sorted(flat.task_ids) == ["A", "X/X1", "X/X2"]
    assert {(e.src, e.dst, e.payload_bytes) for e in flat.edges} == {("A", "X/X1", 3), ("X/X1", "X/X2", 7)}


def test_flatten_depth_three_single_task_bodies():
    inner = WorkflowSpec("c", (TaskNode.atomic("C"),))
    mid = WorkflowSpec("b", (TaskNode.nested("B", inner),))
    w = WorkflowSpec("a", (TaskNode.atomic("start"), TaskNode.nested("A", mid), TaskNode.atomic("end")),
                     (DataEdge("start", "A", 1), DataEdge("A", "end", 2)))
    flat = flatten(w)
    assert topo_order(flat) == ["start", "A/B/C", "end"]
    assert {(e.src, e.dst) for e in flat.edges} == {("start", "A/B/C"), ("A/B/C", "end")}


def test_boundary_edges_fan_out_to_all_sources_and_sinks():
    body = WorkflowSpec("x", (TaskNode.atomic("p"), TaskNode.atomic("q")))
    w = WorkflowSpec("o", (TaskNode.atomic("A"), TaskNode.nested("X", body), TaskNode.atomic("Z")),
                     (DataEdge("A", "X", 1), DataEdge("X", "Z", 2)))
    edges = {(e.src, e.dst) for e in flatten(w).edges}
    assert edges == {("A", "X/p"), ("A", "X/q"), ("X/p", "Z"), ("X/q", "Z")}


def test_depth_limit():
    w = WorkflowSpec("leaf", (TaskNode.atomic("t"),))
    for i in range(MAX_DEPTH - 1):
        w = WorkflowSpec(f"l{i}", (TaskNode.nested("n", w),))
    assert w.depth() == MAX_DEPTH
    assert len(flatten(w).tasks) == 1
    with pytest.raises(DepthError):
        WorkflowSpec("too-deep", (TaskNode.nested("n", w),))


def test_depth_limit_in_documents():
    body = {"name": "leaf", "tasks": [atomic("t")]}
    for _ in range(MAX_DEPTH):
        body = {"name": "b", "tasks": [{"id": "n", "kind": "subworkflow", "body": body}]}
    with pytest.raises(DepthError):
        parse_workflow(json.dumps({"v": 1, **body}))


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32))
def test_round_trip_and_idempotent_flatten(seed):
    rng = random.Random(seed)
    w = random_nested(rng, depth=3)
    assert parse_workflow(serialize_workflow(w)) == w
    flat = flatten(w)
    assert flatten(flat) == flat
    order = topo_order(flat)
    pos = {t: i for i, t in enumerate(order)}
    assert all(pos[e.src] < pos[e.dst] for e in flat.edges)


def test_cluster_round_trip():
    cluster = nodes(3)
    assert parse_cluster(serialize_cluster(cluster)) == cluster


def test_cluster_errors():
    with pytest.raises(ParseError):
        parse_cluster(json.dumps({"v": 1, "nodes": []}))
    with pytest.raises(ParseError):
        parse_cluster(json.dumps({"nodes": [nodes(1)[0].to_dict()]}))
    dup = [nodes(1)[0].to_dict()] * 2
    with pytest.raises(ValidationError):
        parse_cluster(json.dumps({"v": 1, "nodes": dup}))
