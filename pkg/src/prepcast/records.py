"""Profiled executions and the append-only JSON-lines repository that stores them."""

from __future__ import annotations

import fcntl
import json
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Mapping

from .errors import CorruptRecordError, PrepcastError, ValidationError
from .workflow import SCHEMA_VERSION, AppFeatures, DynFeatures, StaticFeatures

REPO_ENV = "PREPCAST_REPO"


class MetricKind(str, Enum):
    EXEC_TIME = "exec_time"
    MEM_PEAK = "mem_peak"
    MEM_AVG = "mem_avg"
    IO_TIME = "io_time"
    NET_TRANSFER = "net_transfer"

    @property
    def field_name(self) -> str:
        return _FIELD[self]


_FIELD = {
    MetricKind.EXEC_TIME: "exec_time_s",
    MetricKind.MEM_PEAK: "mem_peak_bytes",
    MetricKind.MEM_AVG: "mem_avg_bytes",
    MetricKind.IO_TIME: "io_time_s",
    MetricKind.NET_TRANSFER: "net_transfer_s",
}


def parse_metric(name: str) -> MetricKind:
    """Accept either the enum value (``exec_time``) or the field name (``exec_time_s``)."""
    for m in MetricKind:
        if name in (m.value, m.field_name, m.name):
            return m
    raise ValueError(f"unknown metric {name!r}; choose from {[m.value for m in MetricKind]}")


@dataclass(frozen=True)
class MetricVector:
    exec_time_s: float = 0.0
    mem_peak_bytes: int = 0
    mem_avg_bytes: int = 0
    io_time_s: float = 0.0
    net_transfer_s: float = 0.0

    def __post_init__(self) -> None:
        for name in ("exec_time_s", "io_time_s", "net_transfer_s"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be finite and non-negative, got {v!r}")
            object.__setattr__(self, name, float(v))
        for name in ("mem_peak_bytes", "mem_avg_bytes"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ValidationError(f"{name} must be a non-negative integer, got {v!r}")
        if self.mem_avg_bytes > self.mem_peak_bytes:
            raise ValidationError("mem_avg_bytes exceeds mem_peak_bytes")

    def get(self, metric: MetricKind) -> float:
        return getattr(self, metric.field_name)

    def to_dict(self) -> dict:
        return {m.field_name: getattr(self, m.field_name) for m in MetricKind}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetricVector":
        return cls(**{m.field_name: d[m.field_name] for m in MetricKind})


@dataclass(frozen=True)
class ProfileRecord:
    """One observed sub-module execution on a node of ``resource_class``.

    ``peer`` holds the static features of the sending node when
    ``observed.net_transfer_s`` describes an inbound transfer of
    ``app.input_bytes``; records without a peer carry no transfer sample.
    """

    record_id: str
    resource_class: str
    app: AppFeatures
    static_f: StaticFeatures
    dyn: DynFeatures
    observed: MetricVector
    timestamp: float
    peer: StaticFeatures | None = None
    meta: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "v": SCHEMA_VERSION,
            "record_id": self.record_id,
            "resource_class": self.resource_class,
            "app": self.app.to_dict(),
            "static": self.static_f.to_dict(),
            "dyn": self.dyn.to_dict(),
            "observed": self.observed.to_dict(),
            "timestamp": self.timestamp,
        }
        if self.peer is not None:
            d["peer"] = self.peer.to_dict()
        if self.meta:
            d["meta"] = dict(self.meta)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ProfileRecord":
        if d.get("v") != SCHEMA_VERSION:
            raise ValueError(f"unsupported record version {d.get('v')!r}")
        peer = d.get("peer")
        return cls(
            record_id=d["record_id"],
            resource_class=d["resource_class"],
            app=AppFeatures.from_dict(d["app"]),
            static_f=StaticFeatures.from_dict(d["static"]),
            dyn=DynFeatures.from_dict(d["dyn"]),
            observed=MetricVector.from_dict(d["observed"]),
            timestamp=float(d["timestamp"]),
            peer=StaticFeatures.from_dict(peer) if peer is not None else None,
            meta=d.get("meta", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def default_repo_path() -> Path:
    env = os.environ.get(REPO_ENV)
    if not env:
        raise PrepcastError(f"no repository given; pass --repo or set {REPO_ENV}")
    return Path(env)


class Repository:
    """Append-only JSON-lines store of :class:`ProfileRecord`.

    Each record is one line written under an exclusive ``flock``, so
    concurrent writers never interleave partial lines. Readers do not lock and
    may observe a prefix of a concurrent append sequence.
    """

    def __init__(self, path: str | os.PathLike | None = None) -> None:
        self.path = Path(path) if path is not None else default_repo_path()

    def append(self, record: ProfileRecord) -> None:
        self.extend([record])

    def extend(self, records: Iterable[ProfileRecord]) -> int:
        payload = "".join(r.to_json() + "\n" for r in records)
        if not payload:
            return 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                fh.write(payload)
                fh.flush()
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)
        return payload.count("\n")

    def scan(self, lenient: bool = False) -> Iterator[ProfileRecord]:
        if not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                if not line.endswith("\n"):
                    # a writer is mid-append; the line is not visible yet
                    break
                try:
                    yield ProfileRecord.from_dict(json.loads(line))
                except (ValueError, KeyError, TypeError, PrepcastError) as exc:
                    if lenient:
                        continue
                    raise CorruptRecordError(self.path, line_no, f"{type(exc).__name__}: {exc}") from None

    def query(
        self,
        resource_class: str | None = None,
        app_predicate: Callable[[AppFeatures], bool] | None = None,
        lenient: bool = False,
    ) -> list[ProfileRecord]:
        """Matching records in append order."""
        out = []
        for r in self.scan(lenient=lenient):
            if resource_class is not None and r.resource_class != resource_class:
                continue
            if app_predicate is not None and not app_predicate(r.app):
                continue
            out.append(r)
        return out

    def __len__(self) -> int:
        return sum(1 for _ in self.scan(lenient=True))


def repo_append(record: ProfileRecord, path: str | os.PathLike | None = None) -> None:
    Repository(path).append(record)


def repo_query(
    path: str | os.PathLike | None = None,
    resource_class: str | None = None,
    app_predicate: Callable[[AppFeatures], bool] | None = None,
    lenient: bool = False,
) -> list[ProfileRecord]:
    return Repository(path).query(resource_class, app_predicate, lenient)
