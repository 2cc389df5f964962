"""Collect node and process telemetry from a Linux ``/proc`` tree.

``proc_root`` is always a parameter so the parsers run against fixture
directories on any platform; only :func:`profile_command` needs a live Linux
kernel.
"""

from __future__ import annotations

import json
import logging
import os
import subprocess
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import MissingFieldError, NoSuchProcessError, ParseError, PrepcastError, SpawnError
from .records import MetricVector, ProfileRecord, Repository
from .workflow import AppFeatures, DynFeatures, StaticFeatures

logger = logging.getLogger(__name__)

DEFAULT_INTERVAL_S = 0.2
MIN_INTERVAL_S = 0.01

# Not observable through /proc; used when no sidecar file is given.
DEFAULT_LINK_FEATURES = {
    "disk_bw_bytes_per_s": 500e6,
    "net_bw_bytes_per_s": 1.25e9,
    "net_latency_s": 1e-4,
}


@dataclass(frozen=True)
class ProcessSnapshot:
    vm_size_bytes: int
    vm_peak_bytes: int
    vm_rss_bytes: int
    threads: int


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8", errors="replace")
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise PrepcastError(f"cannot read {path}: {exc}") from exc


def _kv_lines(text: str) -> dict[str, str]:
    """``key : value`` pairs; the first occurrence of a key wins."""
    out: dict[str, str] = {}
    for line in text.splitlines():
        key, sep, value = line.partition(":")
        if sep:
            out.setdefault(key.strip(), value.strip())
    return out


def _kb_to_bytes(raw: str, key: str) -> int:
    parts = raw.split()
    try:
        value = int(parts[0])
    except (IndexError, ValueError):
        raise ParseError(f"cannot parse {key!r} value {raw!r}") from None
    unit = parts[1].lower() if len(parts) > 1 else "kb"
    if unit != "kb":
        raise ParseError(f"unexpected unit {unit!r} for {key!r}")
    return value * 1024


def parse_cpuinfo(text: str) -> dict:
    cores = sum(1 for line in text.splitlines() if line.split(":")[0].strip() == "processor")
    fields = _kv_lines(text)
    if cores == 0:
        raise MissingFieldError("cpuinfo has no 'processor' stanzas")
    try:
        mhz = float(fields["cpu MHz"])
    except KeyError:
        raise MissingFieldError("cpuinfo lacks 'cpu MHz'") from None
    except ValueError:
        raise ParseError(f"bad 'cpu MHz' value {fields['cpu MHz']!r}") from None
    try:
        cache_kb = int(fields["cache size"].split()[0])
    except KeyError:
        raise MissingFieldError("cpuinfo lacks 'cache size'") from None
    except (IndexError, ValueError):
        raise ParseError(f"bad 'cache size' value {fields['cache size']!r}") from None
    return {"cores": cores, "cpu_mhz": mhz, "cache_kb": cache_kb}


def parse_meminfo(text: str) -> dict[str, int]:
    """All ``kB`` fields of meminfo, converted to bytes."""
    out = {}
    for key, raw in _kv_lines(text).items():
        try:
            out[key] = _kb_to_bytes(raw, key)
        except ParseError:
            continue
    return out


def load_sidecar(path: str | os.PathLike | None) -> dict[str, float]:
    link = dict(DEFAULT_LINK_FEATURES)
    if path is None:
        return link
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise PrepcastError(f"cannot read sidecar {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"sidecar {path} is not JSON: {exc}") from None
    for key in DEFAULT_LINK_FEATURES:
        if key in doc:
            link[key] = float(doc[key])
    return link


def read_static(proc_root: str | os.PathLike = "/proc", sidecar: str | os.PathLike | None = None) -> StaticFeatures:
    """Static node features from ``cpuinfo`` and ``meminfo`` under ``proc_root``.

    Disk/network bandwidth and latency come from the optional JSON ``sidecar``
    file (keys as in :data:`DEFAULT_LINK_FEATURES`).
    """
    root = Path(proc_root)
    try:
        cpu = parse_cpuinfo(_read(root / "cpuinfo"))
        mem = parse_meminfo(_read(root / "meminfo"))
    except FileNotFoundError as exc:
        raise PrepcastError(f"missing proc file: {exc.filename}") from None
    if "MemTotal" not in mem:
        raise MissingFieldError("meminfo lacks 'MemTotal'")
    return StaticFeatures(mem_total_bytes=mem["MemTotal"], **cpu, **load_sidecar(sidecar))


def read_dynamic(proc_root: str | os.PathLike = "/proc", queue_wait_s: float = 0.0) -> DynFeatures:
    """Current load: running-task count and 1-minute load from ``loadavg``,
    used memory as ``MemTotal - MemAvailable``. Queue wait is not in /proc."""
    root = Path(proc_root)
    try:
        fields = _read(root / "loadavg").split()
        mem = parse_meminfo(_read(root / "meminfo"))
    except FileNotFoundError as exc:
        raise PrepcastError(f"missing proc file: {exc.filename}") from None
    try:
        load1 = float(fields[0])
        running = int(fields[3].split("/")[0])
    except (IndexError, ValueError):
        raise ParseError(f"cannot parse loadavg {' '.join(fields)!r}") from None
    if "MemTotal" not in mem:
        raise MissingFieldError("meminfo lacks 'MemTotal'")
    available = mem.get("MemAvailable", mem.get("MemFree", 0))
    return DynFeatures(
        jobs_running=running,
        queue_wait_s=queue_wait_s,
        load_average=load1,
        mem_used_bytes=max(mem["MemTotal"] - available, 0),
    )


def parse_status(text: str) -> ProcessSnapshot:
    fields = _kv_lines(text)
    try:
        return ProcessSnapshot(
            vm_size_bytes=_kb_to_bytes(fields["VmSize"], "VmSize"),
            vm_peak_bytes=_kb_to_bytes(fields["VmPeak"], "VmPeak"),
            vm_rss_bytes=_kb_to_bytes(fields["VmRSS"], "VmRSS"),
            threads=int(fields["Threads"]),
        )
    except KeyError as exc:
        # kernel threads and zombies have no Vm* lines
        raise ParseError(f"status lacks {exc}") from None
    except ValueError:
        raise ParseError(f"bad Threads value {fields['Threads']!r}") from None


def sample_process(proc_root: str | os.PathLike, pid: int) -> ProcessSnapshot:
    path = Path(proc_root) / str(pid) / "status"
    try:
        text = path.read_text(encoding="utf-8", errors="replace")
    except (FileNotFoundError, ProcessLookupError):
        raise NoSuchProcessError(f"no process {pid} under {proc_root}") from None
    return parse_status(text)


def profile_command(
    cmd: Sequence[str],
    app: AppFeatures,
    resource_class: str,
    interval_s: float = DEFAULT_INTERVAL_S,
    *,
    repo: Repository | None = None,
    proc_root: str | os.PathLike = "/proc",
    sidecar: str | os.PathLike | None = None,
    io_time_s: float = 0.0,
    net_transfer_s: float = 0.0,
    static_f: StaticFeatures | None = None,
) -> ProfileRecord:
    """Run ``cmd`` to completion, sampling ``/proc/<pid>/status`` every ``interval_s``.

    Peak memory is the largest ``VmPeak`` seen and average memory the mean
    ``VmRSS`` over successful samples. I/O and network time cannot be seen in
    ``status`` and are taken from the caller. A nonzero exit status is kept in
    ``meta["exit_code"]``; it does not raise.
    """
    if interval_s < MIN_INTERVAL_S:
        raise ValueError(f"interval_s must be >= {MIN_INTERVAL_S}")
    if static_f is None:
        static_f = read_static(proc_root, sidecar)
    dyn = read_dynamic(proc_root)

    t0 = time.monotonic()
    wall0 = time.time()
    try:
        proc = subprocess.Popen(list(cmd), stdin=subprocess.DEVNULL)
    except OSError as exc:
        raise SpawnError(f"cannot spawn {cmd!r}: {exc}") from exc

    peaks: list[int] = []
    rss: list[int] = []
    attempts = 0
    while True:
        attempts += 1
        try:
            snap = sample_process(proc_root, proc.pid)
            peaks.append(snap.vm_peak_bytes)
            rss.append(snap.vm_rss_bytes)
        except (NoSuchProcessError, ParseError):
            pass
        try:
            proc.wait(timeout=interval_s)
            break
        except subprocess.TimeoutExpired:
            continue
    elapsed = time.monotonic() - t0

    mem_peak = max(peaks, default=0)
    mem_avg = min(round(sum(rss) / len(rss)), mem_peak) if rss else 0
    record = ProfileRecord(
        record_id=uuid.uuid4().hex,
        resource_class=resource_class,
        app=app,
        static_f=static_f,
        dyn=dyn,
        observed=MetricVector(
            exec_time_s=elapsed,
            mem_peak_bytes=mem_peak,
            mem_avg_bytes=mem_avg,
            io_time_s=io_time_s,
            net_transfer_s=net_transfer_s,
        ),
        timestamp=wall0,
        meta={
            "cmd": list(cmd),
            "exit_code": proc.returncode,
            "samples": len(peaks),
            "sample_attempts": attempts,
            "interval_s": interval_s,
        },
    )
    if proc.returncode != 0:
        logger.warning("profiled command exited with status %s", proc.returncode)
    if repo is not None:
        repo.append(record)
    return record
