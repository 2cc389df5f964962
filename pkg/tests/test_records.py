import json

import pytest

from prepcast.errors import CorruptRecordError, PrepcastError, ValidationError
from prepcast.oracle import OracleLaw, ClassLaw, generate_dataset
from prepcast.records import (
    REPO_ENV,
    MetricKind,
    MetricVector,
    ProfileRecord,
    Repository,
    parse_metric,
    repo_append,
    repo_query,
)
from prepcast.workflow import AppFeatures, DynFeatures

from conftest import static


def record(rid="r0", cls="gordon", **obs):
    values = dict(exec_time_s=1.5, mem_peak_bytes=100, mem_avg_bytes=60, io_time_s=0.1, net_transfer_s=0.0)
    values.update(obs)
    return ProfileRecord(rid, cls, AppFeatures(input_bytes=10, flop_count=20), static(), DynFeatures(),
                         MetricVector(**values), 0.0)


def test_metric_names():
    assert parse_metric("exec_time") is MetricKind.EXEC_TIME
    assert parse_metric("mem_peak_bytes") is MetricKind.MEM_PEAK
    assert parse_metric("NET_TRANSFER") is MetricKind.NET_TRANSFER
    with pytest.raises(ValueError):
        parse_metric("latency")


def test_metric_vector_invariants():
    with pytest.raises(ValidationError):
        MetricVector(1.0, 10, 11, 0.0, 0.0)
    with pytest.raises(ValidationError):
        MetricVector(-1.0, 10, 1, 0.0, 0.0)
    with pytest.raises(ValidationError):
        MetricVector(float("nan"), 10, 1, 0.0, 0.0)


def test_append_then_query(tmp_path):
    repo = Repository(tmp_path / "repo.jsonl")
    r = record()
    repo.append(r)
    assert repo.query() == [r]


def test_filter_by_class_keeps_order(tmp_path):
    repo = Repository(tmp_path / "repo.jsonl")
    recs = [record("a", "gordon"), record("b", "comet"), record("c", "gordon")]
    repo.extend(recs)
    assert [r.record_id for r in repo.query(resource_class="gordon")] == ["a", "c"]
    assert [r.record_id for r in repo.query(app_predicate=lambda a: a.input_bytes == 10)] == ["a", "b", "c"]


def test_ten_thousand_appends(tmp_path):
    law = OracleLaw({"gordon": ClassLaw()}, noise_rel_sigma=0.05, seed=1)
    recs = generate_dataset(law, 10_000)
    repo = Repository(tmp_path / "repo.jsonl")
    for r in recs:
        repo.append(r)
    back = repo.query()
    assert len(back) == 10_000
    assert back == recs
    assert [b.to_json() for b in back] == [r.to_json() for r in recs]


def test_corrupt_line_reported_with_number(tmp_path):
    path = tmp_path / "repo.jsonl"
    repo = Repository(path)
    repo.append(record("a"))
    with open(path, "a") as fh:
        fh.write("{not json\n")
    repo.append(record("b"))
    with pytest.raises(CorruptRecordError) as info:
        repo.query()
    assert info.value.line_no == 2
    assert [r.record_id for r in repo.query(lenient=True)] == ["a", "b"]


def test_unfinished_final_line_is_invisible(tmp_path):
    path = tmp_path / "repo.jsonl"
    Repository(path).append(record("a"))
    with open(path, "a") as fh:
        fh.write(record("b").to_json()[:40])
    assert [r.record_id for r in Repository(path).query()] == ["a"]


def test_wrong_version_is_corrupt(tmp_path):
    path = tmp_path / "repo.jsonl"
    d = record().to_dict()
    d["v"] = 7
    path.write_text(json.dumps(d) + "\n")
    with pytest.raises(CorruptRecordError):
        Repository(path).query()


def test_env_var_repository(tmp_path, monkeypatch):
    monkeypatch.setenv(REPO_ENV, str(tmp_path / "env.jsonl"))
    repo_append(record("x"))
    assert [r.record_id for r in repo_query()] == ["x"]
    monkeypatch.delenv(REPO_ENV)
    with pytest.raises(PrepcastError):
        Repository()


def test_missing_repository_is_empty(tmp_path):
    assert Repository(tmp_path / "none.jsonl").query() == []
