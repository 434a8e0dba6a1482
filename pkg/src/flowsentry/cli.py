"""Command line interface.

    flowsentry synth-data --out data/
    flowsentry corrupt --in test-images.idx --kind gaussian_noise --severity 3 \
        --seed 7 --out noisy.idx
    flowsentry run --workflow wf.json --shared-root work/
    flowsentry scenario run --name ddc_hlc --labels 50 --seed 1 \
        --simulated-human --data data/ --workdir work/
    flowsentry scenario compare --runs <id>... --store work/store --assert-ordering
    flowsentry serve --store work/store --port 8765
"""

from __future__ import annotations

import argparse
import json
import sys
import uuid
from pathlib import Path

from .data_io import CorruptionSpec, Dataset, corrupt, load_idx, save_idx
from .feedback import FeedbackService
from .graph import WorkflowGraph
from .httpd import ServiceServer
from .runtime import ExecutionContext, run_workflow
from .scenarios import (
    SCENARIOS,
    ScenarioSpec,
    compare,
    ensure_base_data,
    row_from_tracker,
    run_scenario,
)
from .tracker import TrackerStore


def _cmd_synth_data(args) -> int:
    paths = ensure_base_data(args.out, args.train_n, args.test_n, args.pool_n, args.seed)
    for key, path in sorted(paths.items()):
        print(f"{key}: {path}")
    return 0


def _cmd_corrupt(args) -> int:
    images = load_idx(args.infile)
    spec = CorruptionSpec(args.kind, args.severity, args.seed)
    out = corrupt(Dataset(images, name=Path(args.infile).stem), spec)
    save_idx(out.images, args.out)
    print(f"wrote {args.out} ({out.name})")
    return 0


def _cmd_run(args) -> int:
    graph = WorkflowGraph.load(args.workflow)
    shared_root = Path(args.shared_root)
    run_id = args.run_id or f"run-{uuid.uuid4().hex[:8]}"
    if args.tracker:
        ctx = ExecutionContext(run_id, shared_root, args.tracker)
        results = run_workflow(graph, ctx)
    else:
        store = TrackerStore(shared_root / ".tracker")
        with ServiceServer(store) as server:
            ctx = ExecutionContext(run_id, shared_root, server.endpoint)
            results = run_workflow(graph, ctx)
    width = max((len(r.node_id) for r in results), default=4)
    for r in results:
        print(f"{r.node_id:<{width}}  {r.exit_status:<6}  {r.duration:7.2f}s  "
              f"{len(r.artifacts)} artifact(s)")
    return 0 if all(r.ok for r in results) else 1


def _cmd_scenario_run(args) -> int:
    spec = ScenarioSpec(
        name=args.name,
        n_labels=args.labels,
        seed=args.seed,
        simulated_human=args.simulated_human,
        data_dir=args.data,
    )
    row = run_scenario(spec, args.workdir, cache_dir=args.cache_dir)
    print(json.dumps(row.to_json(), indent=2))
    return 0


def _cmd_scenario_compare(args) -> int:
    store = TrackerStore(args.store)
    rows = [row_from_tracker(store, run_id) for run_id in args.runs]
    report = compare(rows, metric=args.metric, tolerance=args.tolerance)
    print(f"metric: {report['metric']}")
    for name in report["expected_order"]:
        print(f"  {name:<10} {report['values'][name]:.4f}")
    print("deltas:")
    for pair, delta in sorted(report["deltas"].items()):
        print(f"  {pair:<22} {delta:+.4f}")
    print(f"ordering holds: {report['ordering_holds']}")
    if args.assert_ordering and not report["ordering_holds"]:
        return 1
    return 0


def _cmd_serve(args) -> int:
    store = TrackerStore(args.store)
    journal = Path(args.journal) if args.journal else Path(args.store) / "feedback.jsonl"
    service = FeedbackService(journal, auto_approve=args.auto_approve)
    server = ServiceServer(store, service, static_dir=args.static, port=args.port)
    server.start()
    print(f"serving on {server.endpoint} (Ctrl-C to stop)", flush=True)
    try:
        import time

        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowsentry")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate the synthetic benchmark datasets")
    p.add_argument("--out", required=True)
    p.add_argument("--train-n", type=int, default=2000)
    p.add_argument("--test-n", type=int, default=1000)
    p.add_argument("--pool-n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=7700)
    p.set_defaults(func=_cmd_synth_data)

    p = sub.add_parser("corrupt", help="apply a corruption to an IDX image file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--kind", required=True)
    p.add_argument("--severity", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_corrupt)

    p = sub.add_parser("run", help="execute a workflow config file")
    p.add_argument("--workflow", required=True)
    p.add_argument("--shared-root", required=True)
    p.add_argument("--tracker", help="tracker endpoint; a private one starts when omitted")
    p.add_argument("--run-id")
    p.set_defaults(func=_cmd_run)

    scenario = sub.add_parser("scenario", help="desk-scale evaluation scenarios")
    ssub = scenario.add_subparsers(dest="scenario_command", required=True)

    p = ssub.add_parser("run", help="run one scenario end to end")
    p.add_argument("--name", required=True, choices=SCENARIOS)
    p.add_argument("--labels", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--simulated-human", action="store_true")
    p.add_argument("--data", required=True)
    p.add_argument("--workdir", default="work")
    p.add_argument("--cache-dir")
    p.set_defaults(func=_cmd_scenario_run)

    p = ssub.add_parser("compare", help="compare logged scenario rows")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--metric", default="accuracy_corrupted")
    p.add_argument("--tolerance", type=float, default=0.0)
    p.add_argument("--assert-ordering", action="store_true")
    p.set_defaults(func=_cmd_scenario_compare)

    p = sub.add_parser("serve", help="run the tracker + feedback service for the UI")
    p.add_argument("--store", required=True)
    p.add_argument("--journal")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--static", help="directory of UI assets to serve at /")
    p.add_argument("--auto-approve", action="store_true")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
