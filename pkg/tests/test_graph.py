import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowsentry.errors import CycleDetected, DuplicateNode, UnknownNode
from flowsentry.graph import (
    EdgeSpec,
    ImprovementLedger,
    NodeSpec,
    WorkflowGraph,
    return_function,
)


def diamond():
    g = WorkflowGraph()
    for node_id in "ABCD":
        g = g.add_node(NodeSpec(node_id))
    for src, dst in (("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")):
        g = g.add_edge(EdgeSpec(src, dst))
    return g


class TestAddNode:
    def test_singleton(self):
        g = WorkflowGraph().add_node(NodeSpec("preprocess"))
        assert len(g.nodes) == 1

    def test_duplicate_id_rejected(self):
        g = WorkflowGraph().add_node(NodeSpec("preprocess"))
        with pytest.raises(DuplicateNode):
            g.add_node(NodeSpec("preprocess"))

    def test_kind_label_round_trip(self):
        g = WorkflowGraph().add_node(NodeSpec("t", kind="tracker"))
        assert [n.id for n in g.nodes_of_kind("tracker")] == ["t"]
        assert g.node("t").kind in g.vertex_labels

    def test_add_node_does_not_mutate_source_graph(self):
        g1 = WorkflowGraph().add_node(NodeSpec("a"))
        g2 = g1.add_node(NodeSpec("b"))
        assert set(g1.nodes) == {"a"}
        assert set(g2.nodes) == {"a", "b"}
        assert g1.edges == g2.edges == ()


class TestAddEdge:
    def test_parallel_edges_share_endpoints(self):
        g = WorkflowGraph().add_node(NodeSpec("A")).add_node(NodeSpec("B"))
        g = g.add_edge(EdgeSpec("A", "B", label="train"))
        g = g.add_edge(EdgeSpec("A", "B", label="infer"))
        assert len(g.edges) == 2
        assert g.edges[0].endpoints == g.edges[1].endpoints == ("A", "B")
        assert {e.label for e in g.edges} == {"train", "infer"}

    def test_depends_on_self_loop_rejected(self):
        g = WorkflowGraph().add_node(NodeSpec("A"))
        with pytest.raises(CycleDetected):
            g.add_edge(EdgeSpec("A", "A"))

    def test_unknown_endpoint_rejected(self):
        g = WorkflowGraph().add_node(NodeSpec("A"))
        with pytest.raises(UnknownNode):
            g.add_edge(EdgeSpec("A", "ghost"))

    def test_dependency_cycle_rejected(self):
        g = WorkflowGraph()
        for n in "AB":
            g = g.add_node(NodeSpec(n))
        g = g.add_edge(EdgeSpec("A", "B"))
        with pytest.raises(CycleDetected):
            g.add_edge(EdgeSpec("B", "A"))

    def test_non_dependency_back_edge_allowed(self):
        g = WorkflowGraph()
        for n in "AB":
            g = g.add_node(NodeSpec(n))
        g = g.add_edge(EdgeSpec("A", "B"))
        g = g.add_edge(EdgeSpec("B", "A", label="metadata", channel="tracker-query"))
        assert len(g.edges) == 2

    def test_add_edge_does_not_mutate_source_graph(self):
        g1 = WorkflowGraph().add_node(NodeSpec("A")).add_node(NodeSpec("B"))
        g2 = g1.add_edge(EdgeSpec("A", "B"))
        assert g1.edges == ()
        assert len(g2.edges) == 1
        assert g1.nodes == g2.nodes


def all_topological_sorts(nodes, edges):
    """Brute-force oracle: every permutation respecting all edges."""
    sorts = []
    for perm in itertools.permutations(nodes):
        pos = {n: i for i, n in enumerate(perm)}
        if all(pos[u] < pos[v] for u, v in edges):
            sorts.append(perm)
    return sorts


class TestExecutionPlan:
    def test_empty_graph(self):
        assert WorkflowGraph().execution_plan() == []

    def test_diamond_matches_topological_oracle(self):
        plan = diamond().execution_plan()
        assert plan == [{"A"}, {"B", "C"}, {"D"}]
        sorts = all_topological_sorts("ABCD", [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")])
        assert all(s[0] == "A" and s[-1] == "D" for s in sorts)
        # B and C appear in both orders across valid sorts: no constraint between them
        middles = {(s[1], s[2]) for s in sorts}
        assert middles == {("B", "C"), ("C", "B")}

    def test_chain_is_total_order(self):
        g = WorkflowGraph()
        for n in "ABC":
            g = g.add_node(NodeSpec(n))
        g = g.add_edge(EdgeSpec("A", "B")).add_edge(EdgeSpec("B", "C"))
        assert g.execution_plan() == [{"A"}, {"B"}, {"C"}]

    def test_random_dags_layer_forward(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            n = int(rng.integers(2, 50))
            names = [f"n{i}" for i in range(n)]
            g = WorkflowGraph()
            for name in names:
                g = g.add_node(NodeSpec(name))
            edges = []
            for i in range(n):
                for j in range(i + 1, n):
                    if rng.random() < 0.1:
                        g = g.add_edge(EdgeSpec(names[i], names[j]))
                        edges.append((names[i], names[j]))
            plan = g.execution_plan()
            stage_of = {node: k for k, stage in enumerate(plan) for node in stage}
            assert sorted(stage_of) == sorted(names)
            assert all(stage_of[u] < stage_of[v] for u, v in edges)


class TestNeighbors:
    def test_diamond_predecessors(self):
        assert diamond().neighbors("D", "predecessors") == {"B", "C"}

    def test_leaf_successors_empty(self):
        assert diamond().neighbors("D", "successors") == set()

    def test_unknown_node(self):
        with pytest.raises(UnknownNode):
            diamond().neighbors("Z", "successors")

    def test_adjacency_matches_edge_enumeration(self):
        g = diamond()
        for node in g.nodes:
            exp_succ = {e.dst for e in g.edges if e.src == node}
            exp_pred = {e.src for e in g.edges if e.dst == node}
            assert g.neighbors(node, "successors") == exp_succ
            assert g.neighbors(node, "predecessors") == exp_pred


class TestReturnFunction:
    def test_empty_ledger(self):
        assert return_function(ImprovementLedger()) == 0.0

    def test_two_entries(self):
        ledger = ImprovementLedger()
        ledger.add(0.5, "r1")
        ledger.add(0.2, "r1")
        assert return_function(ledger) == pytest.approx(0.7)

    def test_signed_entries_independent_sum(self):
        deltas = [0.3, -0.1, 0.3]
        ledger = ImprovementLedger()
        for d in deltas:
            ledger.add(d, "r")
        assert return_function(ledger) == pytest.approx(sum(deltas))

    @given(st.lists(st.floats(min_value=-1, max_value=1), max_size=20))
    @settings(max_examples=50, deadline=None)
    def test_permutation_invariant(self, deltas):
        a, b = ImprovementLedger(), ImprovementLedger()
        for d in deltas:
            a.add(d, "r")
        for d in reversed(deltas):
            b.add(d, "r")
        assert abs(return_function(a) - return_function(b)) < 1e-12


class TestConfigRoundTrip:
    def test_lossless(self, tmp_path):
        g = diamond().add_node(NodeSpec("t", kind="tracker", command="", params={"x": 1}))
        g = g.add_edge(EdgeSpec("A", "t", label="metadata", channel="tracker-query"))
        path = tmp_path / "wf.json"
        g.save(path)
        back = WorkflowGraph.load(path)
        assert back.to_config() == g.to_config()
        assert back.nodes == g.nodes
        assert back.edges == g.edges
