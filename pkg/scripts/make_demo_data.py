"""Regenerate the bundled example inputs, demo models and the predict golden file.

    python3 scripts/make_demo_data.py
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

from prepcast.composer import compose
from prepcast.learning import ForestParams, save_registry, train_registry
from prepcast.mtga import mtga_cluster, mtga_mapping, mtga_workflow
from prepcast.oracle import ClassLaw, FeatureSampler, OracleLaw, generate_dataset
from prepcast.planner import PREP, AlternativeGroup, Explicit, plan, serialize_prep
from prepcast.workflow import serialize_cluster, serialize_workflow

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "src" / "prepcast" / "data"
GOLDEN = ROOT / "tests" / "golden"

# ranges wide enough to cover the MTGA table (core-hours scale FLOPs, tens of GB inputs)
SAMPLER = FeatureSampler(
    input_bytes=(5e7, 6e10),
    flop_count=(1e12, 5e16),
    io_bytes=(5e7, 6e10),
    static_by_class={"gordon": {"cpu_mhz": (2400.0, 2800.0), "net_bw_bytes_per_s": (2e9, 8e9)}},
)
LAW = OracleLaw(
    {
        "gordon": ClassLaw(),
        "comet": ClassLaw(t_flop_s_per_gop=1.3, t_io_s_per_gb=0.8, contention_slope=0.15),
    },
    noise_rel_sigma=0.05,
    seed=42,
)
DEMO_PARAMS = ForestParams(n_trees=10, max_depth=6, seed=7)


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    GOLDEN.mkdir(parents=True, exist_ok=True)
    law_doc = {**LAW.to_dict(), "sampler": SAMPLER.to_dict()}
    (DATA / "demo_law.json").write_text(json.dumps(law_doc, indent=2, sort_keys=True) + "\n")

    w = mtga_workflow()
    cluster = mtga_cluster()
    mapping = mtga_mapping(cluster)
    (DATA / "mtga_workflow.json").write_text(serialize_workflow(w))
    (DATA / "mtga_cluster.json").write_text(serialize_cluster(cluster))
    (DATA / "mtga_mapping.json").write_text(json.dumps(mapping, indent=2, sort_keys=True) + "\n")
    prep = plan(w, cluster, Explicit(mapping))
    (DATA / "mtga_prep.json").write_text(serialize_prep(prep))

    # mapping and assembly may share a node or not: four concrete plans
    base = plan(w, cluster, Explicit(mapping))
    choice = PREP(
        base.steps, base.transfers,
        (AlternativeGroup("assembly", ("gordon-03", "gordon-05")), AlternativeGroup("mapping", ("gordon-03", "gordon-04"))),
        base.nodes,
    )
    (DATA / "mtga_choice_prep.json").write_text(serialize_prep(choice))

    records = generate_dataset(LAW, 600, SAMPLER)
    registry = train_registry(records, params=DEMO_PARAMS, classes=["gordon"], generic=True)
    models = DATA / "models"
    shutil.rmtree(models, ignore_errors=True)
    save_registry(registry, models)

    (GOLDEN / "mtga_pred.json").write_text(compose(prep, registry).to_json())


if __name__ == "__main__":
    main()
