"""``prepcast`` command line.

Exit status: 0 on success, 1 on usage errors, 2 on data or model errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .composer import compare_alternatives, compose, compose_nested
from .errors import PrepcastError
from .evaluation import EvalReport, eval_cross_workflow, evaluate
from .learning.forest import ForestParams
from .learning.registry import load_registry, save_registry, train_registry
from .oracle import FeatureSampler, OracleLaw, generate_dataset
from .planner import AllCandidates, Explicit, RoundRobin, parse_prep, plan, serialize_prep
from .profiler import DEFAULT_INTERVAL_S, profile_command
from .records import REPO_ENV, MetricKind, ProfileRecord, Repository, parse_metric
from .workflow import AppFeatures, DynFeatures, parse_cluster, parse_workflow

log = logging.getLogger("prepcast")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise PrepcastError(f"cannot read {path}: {exc}") from exc


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text, encoding="utf-8")


def _repo(path: str | None) -> Repository:
    path = path or os.environ.get(REPO_ENV)
    if not path:
        raise UsageError(f"no repository: pass --repo or set {REPO_ENV}")
    return Repository(path)


def _policy(args: argparse.Namespace):
    if args.policy == "round-robin":
        return RoundRobin()
    if args.policy == "all-candidates":
        return AllCandidates()
    if not args.mapping:
        raise UsageError("--policy explicit needs --mapping")
    mapping = json.loads(_read(args.mapping))
    if not isinstance(mapping, dict):
        raise PrepcastError("mapping file must be a JSON object of task id -> node id")
    return Explicit(mapping)


def _dyn(path: str | None) -> dict[str, DynFeatures] | None:
    if not path:
        return None
    doc = json.loads(_read(path))
    return {k: DynFeatures.from_dict(v) for k, v in doc.items()}


def _forest_params(args: argparse.Namespace) -> ForestParams:
    return ForestParams(
        n_trees=args.n_trees,
        max_depth=None if args.max_depth is not None and args.max_depth < 0 else args.max_depth,
        min_leaf=args.min_leaf,
        feature_subsample_count=args.features,
        seed=args.seed,
        bootstrap=not args.no_bootstrap,
    )


def _metrics(names: Sequence[str] | None) -> list[MetricKind]:
    if not names:
        return list(MetricKind)
    try:
        return [parse_metric(n) for n in names]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- subcommands -----------------------------------------------------------------


def cmd_plan(args: argparse.Namespace) -> int:
    w = parse_workflow(_read(args.workflow))
    cluster = parse_cluster(_read(args.cluster))
    prep = plan(w, cluster, _policy(args), _dyn(args.dyn))
    _write(args.out, serialize_prep(prep))
    log.info("planned %d steps, %d transfers, %d alternative groups",
             len(prep.steps), len(prep.transfers), len(prep.alternatives))
    return 0


def _load_law(path: str) -> tuple[OracleLaw, FeatureSampler | None, list[str] | None]:
    doc = json.loads(_read(path))
    law = OracleLaw.from_dict(doc)
    sampler = FeatureSampler.from_dict(doc["sampler"]) if "sampler" in doc else None
    return law, sampler, doc.get("generate_classes")


def cmd_simulate(args: argparse.Namespace) -> int:
    law, sampler, classes = _load_law(args.law)
    if args.noise is not None:
        law = OracleLaw(law.classes, args.noise, law.seed)
    records = generate_dataset(
        law, args.n, sampler, resource_classes=args.resource_class or classes, seed=args.seed)
    text = "".join(r.to_json() + "\n" for r in records)
    if args.append:
        Repository(args.out).extend(records)
    else:
        _write(args.out, text)
    log.info("wrote %d records", len(records))
    return 0


def cmd_profile(args: argparse.Namespace) -> int:
    if not args.cmd:
        raise UsageError("no command given after --")
    cmd = args.cmd[1:] if args.cmd[0] == "--" else args.cmd
    app = AppFeatures.from_dict(json.loads(_read(args.app))) if args.app else AppFeatures()
    record = profile_command(
        cmd, app, args.resource_class, args.interval,
        repo=_repo(args.repo), proc_root=args.proc_root, sidecar=args.sidecar,
        io_time_s=args.io_time, net_transfer_s=args.net_transfer,
    )
    print(json.dumps(record.observed.to_dict(), sort_keys=True))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    records = _repo(args.repo).query(lenient=args.lenient)
    # generic agents always pool every record in the repository
    classes = sorted(set(args.resource_class)) if args.resource_class else None
    registry = train_registry(
        records, _metrics(args.metric), _forest_params(args),
        classes=classes, generic=not args.no_generic, model_kind=args.model,
    )
    written = save_registry(registry, args.out)
    for path in written:
        print(path)
    return 0


def _print_graph_summary(graph) -> None:
    print(f"makespan_s {graph.makespan_s:.6f}")
    print(f"total_transfer_s {graph.total_transfer_s:.6f}")
    print("critical_path " + " -> ".join(graph.critical_path))
    if graph.fallback_used:
        print("note: generic fallback models were used")


def cmd_predict(args: argparse.Namespace) -> int:
    registry = load_registry(args.models)
    if args.prep:
        graph = compose(parse_prep(_read(args.prep)), registry)
    elif args.workflow and args.cluster:
        w = parse_workflow(_read(args.workflow))
        graph = compose_nested(w, parse_cluster(_read(args.cluster)), _policy(args), registry, _dyn(args.dyn))
    else:
        raise UsageError("predict needs --prep, or --workflow with --cluster")
    if args.out:
        _write(args.out, graph.to_json())
    _print_graph_summary(graph)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    registry = load_registry(args.models)
    ranked = compare_alternatives(parse_prep(_read(args.prep)), registry, cap=args.cap)
    rows = []
    for rank, (concrete, graph) in enumerate(ranked, start=1):
        assignment = concrete.assignment()
        rows.append({
            "rank": rank,
            "makespan_s": graph.makespan_s,
            "total_transfer_s": graph.total_transfer_s,
            "assignment": dict(sorted(assignment.items())),
        })
        if rank <= args.top:
            pairs = " ".join(f"{k}={v}" for k, v in sorted(assignment.items()))
            print(f"{rank:>4}  makespan_s={graph.makespan_s:.6f}  transfer_s={graph.total_transfer_s:.6f}  {pairs}")
    if args.out:
        _write(args.out, json.dumps({"v": 1, "ranking": rows}, indent=2) + "\n")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    params = _forest_params(args)
    metrics = _metrics(args.metric)
    test_records = _repo(args.repo).query(lenient=args.lenient)
    if args.train_repo:
        train_records = Repository(args.train_repo).query(lenient=args.lenient)
        report = eval_cross_workflow(train_records, test_records, params, metrics, args.model)
    else:
        report = evaluate(test_records, args.test_ratio, args.seed, params, metrics, args.model, args.generic)
    if args.out:
        _write(args.out, report.to_json())
    sys.stdout.write(report.to_text())
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    report = EvalReport.from_dict(json.loads(_read(args.report)))
    sys.stdout.write(report.to_text())
    if args.csv:
        _write(args.csv, report.to_csv())
    if args.json:
        _write(args.json, report.to_json())
    return 0


# -- parser ---------------------------------------------------------------------


def _add_forest_flags(p: argparse.ArgumentParser) -> None:
    d = ForestParams()
    p.add_argument("--model", choices=("forest", "linear"), default="forest")
    p.add_argument("--n-trees", type=int, default=d.n_trees)
    p.add_argument("--max-depth", type=int, default=d.max_depth, help="negative for unlimited")
    p.add_argument("--min-leaf", type=int, default=d.min_leaf)
    p.add_argument("--features", type=int, default=None, help="features tried per split (default: all)")
    p.add_argument("--no-bootstrap", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metric", action="append", help="repeatable; default: every metric")
    p.add_argument("--lenient", action="store_true", help="skip corrupt repository lines")


def _add_policy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--policy", choices=("round-robin", "all-candidates", "explicit"), default="round-robin")
    p.add_argument("--mapping", help="JSON task id -> node id, for --policy explicit")
    p.add_argument("--dyn", help="JSON task id -> dynamic features assumed at prediction time")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prepcast", description=__doc__.splitlines()[0].strip("`"))
    parser.add_argument("--version", action="version", version=f"prepcast {__version__}")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("plan", help="bind a workflow to a cluster")
    p.add_argument("--workflow", required=True)
    p.add_argument("--cluster", required=True)
    _add_policy_flags(p)
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="generate oracle ProfileRecords")
    p.add_argument("--law", required=True)
    p.add_argument("--n", "-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the law's seed")
    p.add_argument("--noise", type=float, default=None, help="overrides noise_rel_sigma")
    p.add_argument("--class", dest="resource_class", action="append", help="repeatable; default: all")
    p.add_argument("--append", action="store_true", help="append to --out instead of overwriting")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("profile", help="run and profile a command")
    p.add_argument("--class", dest="resource_class", required=True)
    p.add_argument("--app", help="JSON application features")
    p.add_argument("--interval", type=float, default=DEFAULT_INTERVAL_S)
    p.add_argument("--repo")
    p.add_argument("--proc-root", default="/proc")
    p.add_argument("--sidecar", help="JSON with disk/network bandwidth and latency")
    p.add_argument("--io-time", type=float, default=0.0)
    p.add_argument("--net-transfer", type=float, default=0.0)
    p.add_argument("cmd", nargs=argparse.REMAINDER)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("train", help="train agents from a repository")
    p.add_argument("--repo")
    p.add_argument("--class", dest="resource_class", action="append", help="repeatable; default: all")
    p.add_argument("--no-generic", action="store_true", help="skip the pooled generic agents")
    _add_forest_flags(p)
    p.add_argument("--out", "-o", required=True, help="model directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predicted temporal graph for a PREP")
    p.add_argument("--prep")
    p.add_argument("--workflow")
    p.add_argument("--cluster")
    _add_policy_flags(p)
    p.add_argument("--models", required=True)
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="rank the alternatives of a PREP")
    p.add_argument("--prep", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--cap", type=int, default=10_000)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("evaluate", help="held-out accuracy report")
    p.add_argument("--repo")
    p.add_argument("--train-repo", help="train here and score all of --repo (cross-workflow)")
    p.add_argument("--test-ratio", type=float, default=0.25)
    p.add_argument("--generic", action="store_true", help="also score pooled generic agents")
    _add_forest_flags(p)
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="print an evaluation report, export CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--csv")
    p.add_argument("--json")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"prepcast: error: {exc}", file=sys.stderr)
        return 1
    except (PrepcastError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"prepcast: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
