"""Directed labeled multigraph of workflow nodes plus the improvement ledger.

A graph holds task nodes and the special tracker/checker/improver nodes.
Edges are an ordered multiset: several edges between the same pair of nodes
are kept apart by their position. Only edges labeled ``depends-on`` constrain
execution order; every other edge label is metadata (phase tags, data routes).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CycleDetected, DuplicateNode, UnknownNode

NODE_KINDS = ("task", "tracker", "checker", "improver")
CHANNELS = ("shared-volume", "tracker-query")
DEPENDS_ON = "depends-on"


@dataclass(frozen=True)
class NodeSpec:
    """One workflow node: a runnable task or a special node."""

    id: str
    kind: str = "task"
    command: str = ""
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ValueError("node id must be nonempty")
        if self.kind not in NODE_KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}; expected one of {NODE_KINDS}")


@dataclass(frozen=True)
class EdgeSpec:
    """One directed edge. `channel` names the transport the edge stands for."""

    src: str
    dst: str
    label: str = DEPENDS_ON
    channel: str = "shared-volume"

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}; expected one of {CHANNELS}")

    @property
    def endpoints(self) -> tuple[str, str]:
        return (self.src, self.dst)


class WorkflowGraph:
    """Immutable-style multigraph; add_node/add_edge return new graphs."""

    def __init__(self, nodes=None, edges=None, edge_labels=None):
        self.nodes: dict[str, NodeSpec] = dict(nodes or {})
        self.edges: tuple[EdgeSpec, ...] = tuple(edges or ())
        self.vertex_labels: frozenset[str] = frozenset(NODE_KINDS)
        labels = set(edge_labels or ()) | {DEPENDS_ON}
        labels.update(e.label for e in self.edges)
        self.edge_labels: frozenset[str] = frozenset(labels)

    # -- construction --------------------------------------------------------

    def add_node(self, spec: NodeSpec) -> "WorkflowGraph":
        if spec.id in self.nodes:
            raise DuplicateNode(f"node {spec.id!r} already present")
        nodes = dict(self.nodes)
        nodes[spec.id] = spec
        return WorkflowGraph(nodes, self.edges, self.edge_labels)

    def add_edge(self, edge: EdgeSpec) -> "WorkflowGraph":
        for endpoint in edge.endpoints:
            if endpoint not in self.nodes:
                raise UnknownNode(f"edge endpoint {endpoint!r} not in graph")
        if edge.label == DEPENDS_ON and self._dependency_reaches(edge.dst, edge.src):
            raise CycleDetected(f"edge {edge.src!r} -> {edge.dst!r} would close a dependency cycle")
        return WorkflowGraph(self.nodes, self.edges + (edge,), self.edge_labels)

    def _dependency_reaches(self, start: str, goal: str) -> bool:
        # includes start == goal, which rejects depends-on self-loops
        seen = set()
        frontier = [start]
        while frontier:
            node = frontier.pop()
            if node == goal:
                return True
            if node in seen:
                continue
            seen.add(node)
            frontier.extend(e.dst for e in self.edges if e.label == DEPENDS_ON and e.src == node)
        return False

    # -- queries --------------------------------------------------------------

    def node(self, node_id: str) -> NodeSpec:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"no node {node_id!r}") from None

    def nodes_of_kind(self, kind: str) -> list[NodeSpec]:
        return [n for n in self.nodes.values() if n.kind == kind]

    def neighbors(self, node_id: str, direction: str) -> set[str]:
        if node_id not in self.nodes:
            raise UnknownNode(f"no node {node_id!r}")
        if direction == "successors":
            return {e.dst for e in self.edges if e.src == node_id}
        if direction == "predecessors":
            return {e.src for e in self.edges if e.dst == node_id}
        raise ValueError(f"direction must be 'predecessors' or 'successors', got {direction!r}")

    def execution_plan(self) -> list[set[str]]:
        """Kahn layering over depends-on edges; each stage may run in parallel.

        Node-id lexicographic order inside a stage keeps plans deterministic.
        """
        indegree = {node_id: 0 for node_id in self.nodes}
        for e in self.edges:
            if e.label == DEPENDS_ON:
                indegree[e.dst] += 1
        remaining = dict(indegree)
        done: set[str] = set()
        stages: list[set[str]] = []
        while len(done) < len(self.nodes):
            ready = sorted(n for n, d in remaining.items() if d == 0 and n not in done)
            if not ready:
                raise CycleDetected("dependency subgraph contains a cycle")
            stage = set(ready)
            for node_id in ready:
                done.add(node_id)
                for e in self.edges:
                    if e.label == DEPENDS_ON and e.src == node_id:
                        remaining[e.dst] -= 1
            stages.append(stage)
        return stages

    # -- config round-trip -----------------------------------------------------

    def to_config(self) -> dict:
        return {
            "edge_labels": sorted(self.edge_labels),
            "nodes": [
                {
                    "id": n.id,
                    "kind": n.kind,
                    "command": n.command,
                    "inputs": dict(n.inputs),
                    "outputs": dict(n.outputs),
                    "params": dict(n.params),
                }
                for n in self.nodes.values()
            ],
            "edges": [
                {"from": e.src, "to": e.dst, "label": e.label, "channel": e.channel}
                for e in self.edges
            ],
        }

    @classmethod
    def from_config(cls, config: dict) -> "WorkflowGraph":
        graph = cls(edge_labels=config.get("edge_labels"))
        for raw in config.get("nodes", ()):
            graph = graph.add_node(
                NodeSpec(
                    id=raw["id"],
                    kind=raw.get("kind", "task"),
                    command=raw.get("command", ""),
                    inputs=raw.get("inputs", {}),
                    outputs=raw.get("outputs", {}),
                    params=raw.get("params", {}),
                )
            )
        for raw in config.get("edges", ()):
            graph = graph.add_edge(
                EdgeSpec(
                    src=raw["from"],
                    dst=raw["to"],
                    label=raw.get("label", DEPENDS_ON),
                    channel=raw.get("channel", "shared-volume"),
                )
            )
        return graph

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_config(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "WorkflowGraph":
        return cls.from_config(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LedgerEntry:
    delta: float
    run_id: str


class ImprovementLedger:
    """Append-only record of quality gains delivered by improver jobs."""

    def __init__(self, entries=None):
        self._entries: list[LedgerEntry] = list(entries or ())

    def add(self, delta: float, run_id: str) -> LedgerEntry:
        entry = LedgerEntry(float(delta), run_id)
        self._entries.append(entry)
        return entry

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


def return_function(ledger: ImprovementLedger) -> float:
    """Cumulative improvement over all recorded improver jobs; 0.0 when empty."""
    return float(sum(e.delta for e in ledger.entries))
