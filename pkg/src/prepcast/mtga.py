"""Microbiome Taxonomy and Gene Abundance (MTGA) workflow fixture.

The eight rows below are the compute requirements of the MTGA pipeline steps
as profiled on SDSC Gordon: tool, input (and reference DB) size, cores and
nodes, CPU usage in core-hours and peak memory per node.

Conversion heuristics (no wall times or FLOP counts were published):

* wall time = core-hours * 3600 / (cores * nodes), i.e. perfect parallel
  efficiency; core-hours may include queue or overhead time;
* FLOPs = core-hours * 3600 * 1e9 (one GFLOP per core-second);
* sizes use binary units (1 GB = 2**30 bytes);
* a memory range ``lo-hi`` is ingested at its midpoint, range kept in meta;
  average memory is taken as the low end of the range.

The workflow edges (QC -> Remove Human DNA -> Remove Duplicates -> {Mapping,
Assembly} -> ORF call -> {Pfam, KEGG}) and the one-task-per-node placement
are a reconstruction of the example execution plan, not a verbatim copy.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .records import MetricVector, ProfileRecord
from .workflow import AppFeatures, DataEdge, DynFeatures, ResourceNode, StaticFeatures, TaskNode, WorkflowSpec

FLOPS_PER_CORE_SECOND = 1e9
_UNITS = {"KB": 2**10, "MB": 2**20, "GB": 2**30, "TB": 2**40}
_SIZE = re.compile(r"^\s*~?\s*([0-9]*\.?[0-9]+)\s*([KMGT]B)\s*$", re.IGNORECASE)


def parse_size(text: str) -> int:
    """``"3.4GB"`` -> bytes (binary units)."""
    m = _SIZE.match(text)
    if not m:
        raise ValueError(f"unparseable size {text!r}")
    return round(float(m.group(1)) * _UNITS[m.group(2).upper()])


def parse_size_range(text: str) -> tuple[int, int]:
    """``"~10GB-30GB"`` -> (lo, hi); a single value gives lo == hi."""
    parts = [p for p in text.replace("~", "").split("-") if p.strip()]
    if len(parts) == 1:
        v = parse_size(parts[0])
        return v, v
    if len(parts) == 2:
        return parse_size(parts[0]), parse_size(parts[1])
    raise ValueError(f"unparseable size range {text!r}")


@dataclass(frozen=True)
class MtgaRow:
    task_id: str
    analysis: str
    tool: str
    data: tuple[str, ...]  # input size, then reference DB size when present
    cores: int
    nodes: int
    core_hours: float
    peak_memory: str  # as published, e.g. "256GB-512GB"

    @property
    def input_bytes(self) -> int:
        return parse_size(self.data[0])

    @property
    def ref_db_bytes(self) -> int:
        return parse_size(self.data[1]) if len(self.data) > 1 else 0

    @property
    def mem_peak_range(self) -> tuple[int, int]:
        return parse_size_range(self.peak_memory)

    @property
    def mem_peak_bytes(self) -> int:
        lo, hi = self.mem_peak_range
        return (lo + hi) // 2

    @property
    def total_cores(self) -> int:
        return self.cores * self.nodes

    @property
    def wall_time_s(self) -> float:
        return self.core_hours * 3600 / self.total_cores

    @property
    def flop_count(self) -> int:
        return round(self.core_hours * 3600 * FLOPS_PER_CORE_SECOND)


MTGA_ROWS: tuple[MtgaRow, ...] = (
    MtgaRow("qc", "Quality control", "QC script", ("43GB",), 1, 1, 38, "~10 MB"),
    MtgaRow("remove_human_dna", "Remove Human DNA", "Bowtie", ("9GB", "6GB"), 16, 1, 2, "~10GB"),
    MtgaRow("remove_duplicates", "Remove Duplicates", "CD-HIT-DUP", ("7GB",), 16, 1, 670, "256GB-512GB"),
    MtgaRow("mapping", "Mapping", "FR-HIT", ("3.4GB", "16GB"), 16, 32, 4784, "~210GB"),
    MtgaRow("assembly", "Assembly", "Velvet", ("7GB",), 16, 1, 700, "256GB-512GB"),
    MtgaRow("orf_call", "ORF call", "Metagene", ("200MB",), 16, 1, 5, "0.5GB"),
    MtgaRow("annotation_pfam", "Annotation (Pfam)", "HMMER 3", ("90MB", "1GB"), 16, 8, 355, "~5GB"),
    MtgaRow("annotation_kegg", "Annotation (KEGG)", "BLASTP", ("90MB", "6GB"), 16, 16, 11960, "~10GB-30GB"),
)

MTGA_EDGES: tuple[tuple[str, str], ...] = (
    ("qc", "remove_human_dna"),
    ("remove_human_dna", "remove_duplicates"),
    ("remove_duplicates", "mapping"),
    ("remove_duplicates", "assembly"),
    ("mapping", "orf_call"),
    ("assembly", "orf_call"),
    ("orf_call", "annotation_pfam"),
    ("orf_call", "annotation_kegg"),
)

# Gordon compute node: 2x8-core Sandy Bridge at 2.6 GHz, 20 MB L3, 64 GB RAM.
GORDON_STATIC = StaticFeatures(
    cores=16,
    cpu_mhz=2600.0,
    cache_kb=20480,
    mem_total_bytes=64 * 2**30,
    disk_bw_bytes_per_s=1.0e9,
    net_bw_bytes_per_s=5.0e9,
    net_latency_s=2e-6,
)


def row(task_id: str) -> MtgaRow:
    for r in MTGA_ROWS:
        if r.task_id == task_id:
            return r
    raise KeyError(task_id)


def app_features(r: MtgaRow) -> AppFeatures:
    return AppFeatures(
        input_bytes=r.input_bytes,
        flop_count=r.flop_count,
        branching_factor=5.0,
        io_bytes=r.input_bytes + r.ref_db_bytes,
        instruction_mix=(0.2, 0.3, 0.3, 0.1, 0.1),
    )


def mtga_workflow() -> WorkflowSpec:
    """Eight-step MTGA DAG; each edge carries the successor's input size."""
    tasks = tuple(TaskNode.atomic(r.task_id, app_features(r)) for r in MTGA_ROWS)
    edges = tuple(DataEdge(u, v, row(v).input_bytes) for u, v in MTGA_EDGES)
    return WorkflowSpec("mtga", tasks, edges)


def mtga_cluster(resource_class: str = "gordon") -> list[ResourceNode]:
    return [ResourceNode(f"{resource_class}-{i:02d}", resource_class, GORDON_STATIC) for i in range(1, 9)]


def mtga_mapping(cluster: Sequence[ResourceNode] | None = None) -> dict[str, str]:
    cluster = cluster or mtga_cluster()
    return {r.task_id: cluster[i % len(cluster)].id for i, r in enumerate(MTGA_ROWS)}


def mtga_to_records(
    rows: Sequence[MtgaRow] = MTGA_ROWS,
    cluster: Sequence[ResourceNode] | Mapping[str, ResourceNode] | None = None,
) -> list[ProfileRecord]:
    """One ProfileRecord per row, on the node the cluster assigns to that row.

    ``cluster`` is either a task-id -> node mapping or a node list used in
    row order (cycled when shorter).
    """
    cluster = cluster if cluster is not None else mtga_cluster()
    out = []
    for i, r in enumerate(rows):
        node = cluster[r.task_id] if isinstance(cluster, Mapping) else cluster[i % len(cluster)]
        lo, hi = r.mem_peak_range
        out.append(ProfileRecord(
            record_id=f"mtga-{r.task_id}",
            resource_class=node.resource_class,
            app=app_features(r),
            static_f=node.static_features,
            dyn=DynFeatures(),
            observed=MetricVector(
                exec_time_s=r.wall_time_s,
                mem_peak_bytes=r.mem_peak_bytes,
                mem_avg_bytes=lo,
                io_time_s=0.0,
                net_transfer_s=0.0,
            ),
            timestamp=0.0,
            meta={
                "analysis": r.analysis,
                "tool": r.tool,
                "cores": r.cores,
                "nodes": r.nodes,
                "core_hours": r.core_hours,
                "mem_peak_range": [lo, hi],
                "ref_db_bytes": r.ref_db_bytes,
                "source": "mtga-table",
            },
        ))
    return out
