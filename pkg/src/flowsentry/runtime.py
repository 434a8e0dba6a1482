"""Stage-by-stage workflow execution in isolated per-node working directories.

Nodes run as subprocesses under shared_root/<node_id> with RUN_ID, SHARED_ROOT,
TRACKER_ENDPOINT, and NODE_ID injected, plus INPUT_*/OUTPUT_* variables for the
declared data slots. The Executor seam exists so a container-backed executor
can be slotted in without touching scheduling.
"""

from __future__ import annotations

import os
import re
import shlex
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SpawnError, Timeout, TrackerUnavailable
from .graph import DEPENDS_ON, NodeSpec, WorkflowGraph
from .tracker import TrackerClient

LOG_EXCERPT_CHARS = 2000
DEFAULT_TIMEOUT = 300.0


@dataclass
class ExecutionContext:
    run_id: str
    shared_root: Path
    tracker_endpoint: str
    env: dict[str, str] = field(default_factory=dict)
    default_timeout: float = DEFAULT_TIMEOUT
    max_workers: int = 4

    def __post_init__(self):
        # nodes run with their own cwd, so the shared root must be absolute
        self.shared_root = Path(self.shared_root).resolve()
        if not self.run_id:
            raise ValueError("run_id must be nonempty")


@dataclass
class NodeResult:
    node_id: str
    exit_status: str              # ok | failed
    duration: float
    artifacts: list[Path]
    log_excerpt: str

    @property
    def ok(self) -> bool:
        return self.exit_status == "ok"


def _slot_env(name: str, prefix: str) -> str:
    return prefix + re.sub(r"[^A-Za-z0-9]", "_", name).upper()


class SubprocessExecutor:
    """Default executor: one subprocess per node, cwd under the shared root."""

    def run(self, spec: NodeSpec, ctx: ExecutionContext) -> NodeResult:
        workdir = ctx.shared_root / spec.id
        workdir.mkdir(parents=True, exist_ok=True)
        env = dict(os.environ)
        env.update(ctx.env)
        env.update({
            "RUN_ID": ctx.run_id,
            "SHARED_ROOT": str(ctx.shared_root),
            "TRACKER_ENDPOINT": ctx.tracker_endpoint,
            "NODE_ID": spec.id,
        })
        for name, rel in spec.inputs.items():
            env[_slot_env(name, "INPUT_")] = str(ctx.shared_root / rel)
        for name, rel in spec.outputs.items():
            env[_slot_env(name, "OUTPUT_")] = str(workdir / rel)

        if not spec.command.strip():
            return NodeResult(spec.id, "ok", 0.0, [], "no command; nothing executed")

        timeout = float(spec.params.get("timeout", ctx.default_timeout))
        argv = shlex.split(spec.command)
        start = time.monotonic()
        try:
            proc = subprocess.run(argv, cwd=workdir, env=env, timeout=timeout,
                                  capture_output=True, text=True)
        except FileNotFoundError as err:
            raise SpawnError(f"node {spec.id!r}: executable not found: {argv[0]!r}") from err
        except PermissionError as err:
            raise SpawnError(f"node {spec.id!r}: cannot execute {argv[0]!r}") from err
        except subprocess.TimeoutExpired as err:
            raise Timeout(f"node {spec.id!r} exceeded {timeout:.0f}s") from err
        duration = time.monotonic() - start

        excerpt = ((proc.stdout or "") + (proc.stderr or ""))[-LOG_EXCERPT_CHARS:]
        status = "ok" if proc.returncode == 0 else "failed"
        return NodeResult(spec.id, status, duration, _artifacts(spec, workdir), excerpt)


def _artifacts(spec: NodeSpec, workdir: Path) -> list[Path]:
    if spec.outputs:
        declared = [workdir / rel for rel in spec.outputs.values()]
        return sorted(p for p in declared if p.exists())
    return sorted(p for p in workdir.rglob("*") if p.is_file())


def run_node(spec: NodeSpec, ctx: ExecutionContext,
             executor: SubprocessExecutor | None = None) -> NodeResult:
    return (executor or SubprocessExecutor()).run(spec, ctx)


def run_workflow(graph: WorkflowGraph, ctx: ExecutionContext,
                 executor: SubprocessExecutor | None = None) -> list[NodeResult]:
    """Execute stages in order; nodes inside a stage run concurrently.

    A failed node fails; its dependents are marked failed without running;
    independent branches keep going. Results are merged by node id.
    """
    plan = graph.execution_plan()
    tracker = TrackerClient(ctx.tracker_endpoint)
    if not tracker.health():
        raise TrackerUnavailable(f"tracker at {ctx.tracker_endpoint!r} is unreachable")
    executor = executor or SubprocessExecutor()
    ctx.shared_root.mkdir(parents=True, exist_ok=True)

    failed: set[str] = set()
    results: dict[str, NodeResult] = {}

    def blocked_by(node_id: str) -> str | None:
        for e in graph.edges:
            if e.label == DEPENDS_ON and e.dst == node_id and e.src in failed:
                return e.src
        return None

    for stage in plan:
        pending: list[NodeSpec] = []
        for node_id in sorted(stage):
            spec = graph.node(node_id)
            culprit = blocked_by(node_id)
            if culprit is not None:
                failed.add(node_id)
                results[node_id] = NodeResult(
                    node_id, "failed", 0.0, [],
                    f"skipped: upstream failure of {culprit!r}")
            elif spec.kind == "tracker":
                results[node_id] = NodeResult(
                    node_id, "ok", 0.0, [], "tracker service node; no task executed")
            else:
                pending.append(spec)

        if pending:
            with ThreadPoolExecutor(max_workers=ctx.max_workers) as pool:
                futures = {pool.submit(_run_guarded, executor, spec, ctx): spec
                           for spec in pending}
                for future, spec in futures.items():
                    result = future.result()
                    results[spec.id] = result
                    if not result.ok:
                        failed.add(spec.id)

        _record_stage(tracker, ctx, [results[n] for n in sorted(stage)])

    return [results[node_id] for node_id in sorted(results)]


def _run_guarded(executor, spec: NodeSpec, ctx: ExecutionContext) -> NodeResult:
    try:
        return executor.run(spec, ctx)
    except (SpawnError, Timeout) as err:
        return NodeResult(spec.id, "failed", 0.0, [], f"{type(err).__name__}: {err}")


def _record_stage(tracker: TrackerClient, ctx: ExecutionContext,
                  results: list[NodeResult]) -> None:
    entries = []
    for r in results:
        entries.append({"node_id": r.node_id, "key": "node/exit_status",
                        "kind": "tag", "value": r.exit_status})
        entries.append({"node_id": r.node_id, "key": "node/duration_s",
                        "kind": "metric", "value": r.duration})
    if entries:
        tracker.save_metadata(entries, ctx.run_id)
