"""Artifact emitters: graph JSON round trip, DOT output, markdown report."""

import json
import math

import numpy as np
import pytest

from rlcausal.data import Dataset, Variable, VariableTable, standardize
from rlcausal.graphs import CausalGraph
from rlcausal.report import emit_dot, emit_json, emit_report, parse_graph_json
from rlcausal.strength import edge_strengths


def _fixture():
    """x2 -> x1 -> y plus a detached x3 -> x4 cluster."""
    table = VariableTable(
        (
            Variable("x1"),
            Variable("x2"),
            Variable("x3", denotation="side channel"),
            Variable("x4"),
            Variable("y"),
        )
    )
    adj = np.zeros((5, 5), dtype=np.int64)
    adj[0, 4] = 1
    adj[1, 0] = 1
    adj[2, 3] = 1
    rng = np.random.default_rng(0)
    ds = standardize(
        Dataset(samples=rng.normal(size=(200, 5)), variables=table)
    )
    graph = CausalGraph(adjacency=adj, variables=table)
    sm = edge_strengths(graph, ds)
    strengths = {e: float(sm.log_strength[e]) for e in graph.edges()}
    return CausalGraph(adjacency=adj, variables=table, strengths=strengths), sm, ds


def test_json_round_trip_preserves_graph_and_strengths():
    graph, sm, _ = _fixture()
    text = emit_json(graph, sm, config={"seed": 3}, metrics={"bic": -12.5})
    rebuilt = parse_graph_json(text)
    np.testing.assert_array_equal(rebuilt.adjacency, graph.adjacency)
    assert rebuilt.variables.names == graph.variables.names
    assert rebuilt.variables[2].denotation == "side channel"
    for e in graph.edges():
        assert rebuilt.strengths[e] == pytest.approx(graph.strengths[e], rel=1e-12)


def test_json_is_canonical_and_versioned():
    graph, sm, _ = _fixture()
    text = emit_json(graph, sm)
    assert text == emit_json(graph, sm)
    payload = json.loads(text)
    assert payload["version"] == 1
    # canonical ordering: sorted keys, edges ascending by (from, to)
    assert text == json.dumps(payload, sort_keys=True, indent=2) + "\n"
    edges = [(e["from"], e["to"]) for e in payload["edges"]]
    assert edges == sorted(edges)


def test_parse_rejects_bad_version_and_gapped_indices():
    graph, sm, _ = _fixture()
    payload = json.loads(emit_json(graph, sm))
    payload["version"] = 2
    with pytest.raises(ValueError, match="version"):
        parse_graph_json(json.dumps(payload))
    payload["version"] = 1
    payload["variables"][0]["index"] = 7
    with pytest.raises(ValueError, match="indices"):
        parse_graph_json(json.dumps(payload))


def test_json_edge_without_strength_is_null():
    table = VariableTable.from_names(["a", "b"])
    adj = np.array([[0, 1], [0, 0]])
    text = emit_json(CausalGraph(adjacency=adj, variables=table))
    edge = json.loads(text)["edges"][0]
    assert edge["log_strength"] is None
    rebuilt = parse_graph_json(text)
    assert rebuilt.strengths == {}


def test_dot_lists_nodes_edges_and_labels():
    graph, _, _ = _fixture()
    dot = emit_dot(graph)
    assert dot.startswith("digraph causal {")
    assert '  v2 [label="x3 [side channel]"];' in dot
    assert f'  v0 -> v4 [label="{graph.strengths[(0, 4)]:.2f}"];' in dot
    assert dot == emit_dot(graph)


def test_dot_quotes_embedded_quotes_and_backslashes():
    table = VariableTable((Variable('we"ird'), Variable("back\\slash")))
    adj = np.array([[0, 1], [0, 0]])
    dot = emit_dot(CausalGraph(adjacency=adj, variables=table))
    assert '[label="we\\"ird"]' in dot
    assert '[label="back\\\\slash"]' in dot


def test_dot_edge_without_strength_has_no_label():
    table = VariableTable.from_names(["a", "b"])
    adj = np.array([[0, 1], [0, 0]])
    dot = emit_dot(CausalGraph(adjacency=adj, variables=table))
    assert "  v0 -> v1;" in dot


def test_report_sections_cover_direct_indirect_and_clusters():
    graph, sm, _ = _fixture()
    text = emit_report(graph, sm, target="y", dropped_rows=4)
    assert "## Direct causes of y" in text
    assert "- x1: log strength" in text
    assert "x2 -> x1 -> y (weakest link" in text
    assert "- Cluster: x3 [side channel], x4" in text
    assert "Rows dropped at ingestion for missing cells: 4" in text
    assert "Columns dropped as near-duplicates: none" in text
    assert "repaired" not in text
    assert text == emit_report(graph, sm, target="y", dropped_rows=4)


def test_report_notes_dropped_columns_and_repair():
    graph, sm, _ = _fixture()
    text = emit_report(
        graph, sm, target="y", dropped_columns=("x9",), repaired=True
    )
    assert "Columns dropped as near-duplicates: x9" in text
    assert "repaired by deleting weak edges" in text


def test_report_empty_graph_states_absences():
    table = VariableTable.from_names(["a", "y"])
    rng = np.random.default_rng(1)
    ds = standardize(Dataset(samples=rng.normal(size=(80, 2)), variables=table))
    graph = CausalGraph(adjacency=np.zeros((2, 2), dtype=np.int64), variables=table)
    sm = edge_strengths(graph, ds)
    text = emit_report(graph, sm, target="y")
    assert "No direct causes of y survived pruning." in text
    assert "No multi-step paths reach the target." in text
    assert "Every connected variable links to the target." in text


def test_report_flags_tied_spacings_for_discrete_column():
    table = VariableTable.from_names(["flag", "y"])
    rng = np.random.default_rng(2)
    cols = np.column_stack([rng.integers(0, 2, size=300), rng.normal(size=300)])
    ds = Dataset(samples=cols.astype(np.float64), variables=table)
    adj = np.array([[0, 1], [0, 0]])
    graph = CausalGraph(adjacency=adj, variables=table)
    sm = edge_strengths(graph, ds)
    strengths = {(0, 1): float(sm.log_strength[0, 1])}
    graph = CausalGraph(adjacency=adj, variables=table, strengths=strengths)
    text = emit_report(graph, sm, target="y")
    assert "tied spacings" in text
    assert "entropy estimate is coarse" in text


def test_report_unknown_target_raises():
    graph, sm, _ = _fixture()
    with pytest.raises(KeyError):
        emit_report(graph, sm, target="nope")
