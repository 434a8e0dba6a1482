"""Desk-scale evaluation scenarios run end to end through the workflow engine.

Five pipelines: a plain baseline, naive self-labeled retraining, drift-detector
plus human labeling, random selection plus human labeling, and drift detection
with human-matched pairs feeding a denoiser wrap. Each is expressed as a
workflow graph whose nodes shell out to `flowsentry.tasks` steps, communicate
through the shared run directory, and log to the tracker service.
"""

from __future__ import annotations

import hashlib
import json
import shlex
import sys
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .data_io import save_idx
from .errors import ConfigMismatch, ScenarioFailed
from .feedback import FeedbackService
from .graph import EdgeSpec, NodeSpec, WorkflowGraph
from .httpd import ServiceServer
from .runtime import ExecutionContext, run_workflow
from .synth import generate_digits
from .tracker import TrackerQuery, TrackerStore

SCENARIOS = ("baseline", "naive", "ddc_hlc", "rnd_hlc", "mdwi_hfc")

BASE_DATA_SEED = 7700
DEFAULT_CORRUPTIONS = (
    ("gaussian_noise", 5),
    ("impulse_noise", 5),
    ("translate", 2),
    ("scale", 2),
)


@dataclass
class ScenarioSpec:
    name: str
    n_labels: int = 50
    seed: int = 0
    simulated_human: bool = True
    data_dir: str | None = None
    train_n: int = 2000
    test_n: int = 1000
    pool_n: int = 1000
    stream_n: int = 1000
    stream_corrupted_fraction: float = 1.0
    corruptions: tuple = DEFAULT_CORRUPTIONS
    pool_size: int = 8
    # training knobs (desk scale)
    cls_epochs: int = 8
    cls_lr: float = 0.1
    cls_batch: int = 32
    ae_epochs: int = 6
    ae_lr: float = 0.001
    ae_batch: int = 64
    retrain_epochs: int = 5
    denoiser_epochs: int = 60
    denoiser_lr: float = 0.001
    denoiser_identity_n: int = 200
    node_timeout: float = 600.0

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}; expected one of {SCENARIOS}")
        if self.name != "baseline" and self.n_labels < 1:
            raise ValueError("n_labels must be >= 1 for non-baseline scenarios")

    def to_json(self) -> dict:
        out = asdict(self)
        out["corruptions"] = [list(c) for c in self.corruptions]
        return out

    @classmethod
    def from_json(cls, raw: dict) -> "ScenarioSpec":
        raw = dict(raw)
        raw["corruptions"] = tuple(tuple(c) for c in raw.get("corruptions", DEFAULT_CORRUPTIONS))
        return cls(**raw)


@dataclass
class ScoreRow:
    run_id: str
    scenario: str
    n_labels: int
    seed: int
    accuracy_clean: float
    accuracy_corrupted: float
    accuracy_mean: float
    per_kind: dict[str, float] = field(default_factory=dict)
    improvement_delta: float = 0.0
    accepted: bool = False
    fingerprint: str = ""

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, raw: dict) -> "ScoreRow":
        return cls(**raw)


# -- base data -------------------------------------------------------------------

BASE_FILES = {
    "train_images": "train-images.idx",
    "train_labels": "train-labels.idx",
    "test_images": "test-images.idx",
    "test_labels": "test-labels.idx",
    "pool_images": "pool-images.idx",
    "pool_labels": "pool-labels.idx",
}


def ensure_base_data(data_dir: str | Path, train_n: int = 2000, test_n: int = 1000,
                     pool_n: int = 1000, seed: int = BASE_DATA_SEED) -> dict[str, Path]:
    """Return base clean datasets, generating synthetic digits on first use."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    paths = {key: data_dir / name for key, name in BASE_FILES.items()}
    if not all(p.exists() for p in paths.values()):
        total = train_n + test_n + pool_n
        full = generate_digits(total, seed=seed, name="synth-digits")
        cuts = (train_n, train_n + test_n)
        parts = {
            "train": full.take(range(0, cuts[0])),
            "test": full.take(range(cuts[0], cuts[1])),
            "pool": full.take(range(cuts[1], total)),
        }
        for part, ds in parts.items():
            save_idx(ds.images, paths[f"{part}_images"])
            save_idx(ds.labels, paths[f"{part}_labels"])
    return paths


def base_data_fingerprint(paths: dict[str, Path], spec: ScenarioSpec) -> str:
    digest = hashlib.sha256()
    for key in sorted(BASE_FILES):
        digest.update(paths[key].read_bytes())
    digest.update(json.dumps([list(c) for c in spec.corruptions]).encode())
    digest.update(f"{spec.train_n}|{spec.test_n}|{spec.stream_n}|"
                  f"{spec.stream_corrupted_fraction}".encode())
    return digest.hexdigest()[:16]


# -- graph construction ------------------------------------------------------------


def _step_command(step: str) -> str:
    return f"{shlex.quote(sys.executable)} -m flowsentry.tasks {step}"


def build_scenario_graph(spec: ScenarioSpec) -> WorkflowGraph:
    """Workflow graph for one scenario; node commands invoke task steps."""
    timeout = {"timeout": spec.node_timeout}
    g = WorkflowGraph()
    g = g.add_node(NodeSpec("tracker", kind="tracker"))
    g = g.add_node(NodeSpec("ingest", command=_step_command("ingest"), params=timeout,
                            outputs={"data": "data.npz"}))
    g = g.add_node(NodeSpec(
        "train-baseline", command=_step_command("train-baseline"), params=timeout,
        inputs={"data": "ingest/data.npz"}, outputs={"baseline": "baseline.json"}))

    chain = ["ingest", "train-baseline"]
    if spec.name == "naive":
        g = g.add_node(NodeSpec(
            "self-label", command=_step_command("self-label"), params=timeout,
            inputs={"data": "ingest/data.npz", "baseline": "train-baseline/baseline.json"},
            outputs={"feedback": "feedback_labels.npz"}))
        g = g.add_node(_improve_node("improve-retrain", timeout,
                                     feedback="self-label/feedback_labels.npz"))
        chain += ["self-label", "improve-retrain"]
    elif spec.name in ("ddc_hlc", "mdwi_hfc"):
        g = g.add_node(NodeSpec(
            "drift-check", kind="checker", command=_step_command("drift-check"),
            params=timeout, inputs={"data": "ingest/data.npz"},
            outputs={"report": "report.json", "critical": "critical.npz"}))
        if spec.name == "ddc_hlc":
            g = g.add_node(NodeSpec(
                "human-label", kind="checker", command=_step_command("human-label"),
                params=timeout,
                inputs={"data": "ingest/data.npz", "critical": "drift-check/critical.npz"},
                outputs={"feedback": "feedback_labels.npz"}))
            g = g.add_node(_improve_node("improve-retrain", timeout,
                                         feedback="human-label/feedback_labels.npz"))
            chain += ["drift-check", "human-label", "improve-retrain"]
        else:
            g = g.add_node(NodeSpec(
                "human-find", kind="checker", command=_step_command("human-find"),
                params=timeout,
                inputs={"data": "ingest/data.npz", "critical": "drift-check/critical.npz"},
                outputs={"feedback": "feedback_pairs.npz"}))
            g = g.add_node(_improve_node("improve-denoise", timeout,
                                         feedback="human-find/feedback_pairs.npz"))
            chain += ["drift-check", "human-find", "improve-denoise"]
    elif spec.name == "rnd_hlc":
        g = g.add_node(NodeSpec(
            "random-select", command=_step_command("random-select"), params=timeout,
            inputs={"data": "ingest/data.npz"}, outputs={"critical": "critical.npz"}))
        g = g.add_node(NodeSpec(
            "human-label", kind="checker", command=_step_command("human-label"),
            params=timeout,
            inputs={"data": "ingest/data.npz", "critical": "random-select/critical.npz"},
            outputs={"feedback": "feedback_labels.npz"}))
        g = g.add_node(_improve_node("improve-retrain", timeout,
                                     feedback="human-label/feedback_labels.npz"))
        chain += ["random-select", "human-label", "improve-retrain"]

    g = g.add_node(NodeSpec(
        "evaluate", command=_step_command("evaluate"), params=timeout,
        inputs={"data": "ingest/data.npz", "baseline": "train-baseline/baseline.json"},
        outputs={"row": "row.json"}))
    chain.append("evaluate")

    for src, dst in zip(chain, chain[1:]):
        g = g.add_edge(EdgeSpec(src, dst, label="depends-on", channel="shared-volume"))
    for node_id in chain:
        g = g.add_edge(EdgeSpec(node_id, "tracker", label="metadata",
                                channel="tracker-query"))
    return g


def _improve_node(node_id: str, timeout: dict, feedback: str) -> NodeSpec:
    step = "improve-retrain" if node_id == "improve-retrain" else "improve-denoise"
    return NodeSpec(
        node_id, kind="improver", command=_step_command(step), params=timeout,
        inputs={"data": "ingest/data.npz", "baseline": "train-baseline/baseline.json",
                "feedback": feedback},
        outputs={"improve": "improve.json"})


# -- execution ------------------------------------------------------------------------


def run_scenario(spec: ScenarioSpec, workdir: str | Path,
                 cache_dir: str | Path | None = None) -> ScoreRow:
    """Run one scenario workflow; returns its score row.

    Starts a private tracker+feedback server for the run. Requires
    `simulated_human` unless an external feedback loop is going to resolve the
    queued tasks while the workflow waits.
    """
    workdir = Path(workdir).resolve()
    cache_dir = Path(cache_dir).resolve() if cache_dir else None
    data_dir = Path(spec.data_dir).resolve() if spec.data_dir else workdir / "data"
    paths = ensure_base_data(data_dir, spec.train_n, spec.test_n, spec.pool_n)
    run_id = f"{spec.name}-L{spec.n_labels}-s{spec.seed}-{uuid.uuid4().hex[:8]}"
    shared_root = workdir / "runs" / run_id
    shared_root.mkdir(parents=True, exist_ok=True)

    store = TrackerStore(workdir / "store")
    service = FeedbackService(shared_root / "feedback-journal.jsonl",
                              auto_approve=spec.simulated_human)
    server = ServiceServer(store, service)
    with server:
        scenario_file = shared_root / "scenario.json"
        scenario_file.write_text(json.dumps({
            "spec": spec.to_json(),
            "data_paths": {k: str(v) for k, v in paths.items()},
            "cache_dir": str(cache_dir) if cache_dir else None,
            "fingerprint": base_data_fingerprint(paths, spec),
        }, indent=2))

        graph = build_scenario_graph(spec)
        graph.save(shared_root / "workflow.json")
        if not spec.simulated_human:
            print(f"waiting for human feedback: open the labeling console with "
                  f"?server={server.endpoint}&run={run_id}", flush=True)
        ctx = ExecutionContext(run_id=run_id, shared_root=shared_root,
                               tracker_endpoint=server.endpoint,
                               default_timeout=spec.node_timeout)
        results = run_workflow(graph, ctx)
        bad = [r for r in results if not r.ok]
        if bad:
            details = "; ".join(f"{r.node_id}: {r.log_excerpt[-400:]}" for r in bad)
            raise ScenarioFailed(f"scenario {spec.name!r} failed — {details}")

    row_path = shared_root / "evaluate" / "row.json"
    return ScoreRow.from_json(json.loads(row_path.read_text()))


# -- comparison -------------------------------------------------------------------------

SCENARIO_ORDER = ("baseline", "rnd_hlc", "ddc_hlc", "mdwi_hfc")


def compare(rows: list[ScoreRow], metric: str = "accuracy_corrupted",
            tolerance: float = 0.0) -> dict:
    """Pairwise deltas plus a check of the expected quality ordering.

    Rows must share the dataset fingerprint and seed; the expected ordering is
    baseline <= rnd_hlc <= ddc_hlc <= mdwi_hfc on the chosen metric, each step
    allowed `tolerance` slack.
    """
    if not rows:
        raise ConfigMismatch("no rows to compare")
    fingerprints = {r.fingerprint for r in rows}
    seeds = {r.seed for r in rows}
    if len(fingerprints) > 1 or len(seeds) > 1:
        raise ConfigMismatch(
            f"rows mix datasets/seeds: fingerprints={sorted(fingerprints)} "
            f"seeds={sorted(seeds)}")
    values = {r.scenario: getattr(r, metric) for r in rows}
    deltas = {
        f"{b}-{a}": values[b] - values[a]
        for a in values for b in values if a != b
    }
    chain = [name for name in SCENARIO_ORDER if name in values]
    holds = all(values[b] >= values[a] - tolerance for a, b in zip(chain, chain[1:]))
    return {
        "metric": metric,
        "values": values,
        "deltas": deltas,
        "expected_order": chain,
        "ordering_holds": holds,
        "tolerance": tolerance,
    }


# -- row recovery from the tracker ----------------------------------------------------


def row_from_tracker(store: TrackerStore, run_id: str) -> ScoreRow:
    entries = store.gather_log(TrackerQuery(run_id, key_prefix="row/"))
    if not entries:
        raise ConfigMismatch(f"run {run_id!r} logged no score row")
    tags = {e.key: e.value for e in entries}
    raw = json.loads(tags["row/json"])
    return ScoreRow.from_json(raw)
