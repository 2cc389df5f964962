"""Fixed-order feature rows for compute and transfer agents."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..records import MetricKind, ProfileRecord
from ..workflow import AppFeatures, DynFeatures, StaticFeatures

FEATURE_NAMES = (
    "input_bytes", "flop_count", "branching_factor", "io_bytes",
    "mix_fp", "mix_int", "mix_mem", "mix_branch", "mix_io",
    "cores", "cpu_mhz", "cache_kb", "mem_total_bytes",
    "disk_bw_bytes_per_s", "net_bw_bytes_per_s", "net_latency_s",
    "jobs_running", "queue_wait_s", "load_average", "mem_used_bytes",
)
FEATURE_DIM = len(FEATURE_NAMES)

TRANSFER_FEATURE_NAMES = (
    "payload_bytes",
    "src_net_bw_bytes_per_s", "src_net_latency_s",
    "dst_net_bw_bytes_per_s", "dst_net_latency_s",
)
TRANSFER_FEATURE_DIM = len(TRANSFER_FEATURE_NAMES)

# byte counts span several orders of magnitude; everything else enters raw
LOG1P_FEATURES = frozenset({"input_bytes", "io_bytes", "mem_total_bytes", "mem_used_bytes", "payload_bytes"})
TRANSFORM = "log1p"


def featurize(app: AppFeatures, st: StaticFeatures, dyn: DynFeatures) -> np.ndarray:
    return np.array([
        math.log1p(app.input_bytes),
        float(app.flop_count),
        app.branching_factor,
        math.log1p(app.io_bytes),
        *app.instruction_mix,
        float(st.cores),
        st.cpu_mhz,
        float(st.cache_kb),
        math.log1p(st.mem_total_bytes),
        st.disk_bw_bytes_per_s,
        st.net_bw_bytes_per_s,
        st.net_latency_s,
        float(dyn.jobs_running),
        dyn.queue_wait_s,
        dyn.load_average,
        math.log1p(dyn.mem_used_bytes),
    ], dtype=np.float64)


def featurize_transfer(payload_bytes: int, st_from: StaticFeatures, st_to: StaticFeatures) -> np.ndarray:
    return np.array([
        math.log1p(payload_bytes),
        st_from.net_bw_bytes_per_s,
        st_from.net_latency_s,
        st_to.net_bw_bytes_per_s,
        st_to.net_latency_s,
    ], dtype=np.float64)


def feature_names(metric: MetricKind) -> tuple[str, ...]:
    return TRANSFER_FEATURE_NAMES if metric is MetricKind.NET_TRANSFER else FEATURE_NAMES


def training_matrix(records: Sequence[ProfileRecord], metric: MetricKind) -> tuple[np.ndarray, np.ndarray]:
    """(X, y) for ``metric``. Transfer rows come only from records with a peer."""
    if metric is MetricKind.NET_TRANSFER:
        usable = [r for r in records if r.peer is not None]
        rows = [featurize_transfer(r.app.input_bytes, r.peer, r.static_f) for r in usable]
        dim = TRANSFER_FEATURE_DIM
    else:
        usable = list(records)
        rows = [featurize(r.app, r.static_f, r.dyn) for r in usable]
        dim = FEATURE_DIM
    X = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    y = np.array([float(r.observed.get(metric)) for r in usable], dtype=np.float64)
    return X, y
