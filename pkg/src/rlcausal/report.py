"""Artifact emitters: graph JSON, Graphviz DOT, and the risk report.

All three are deterministic functions of the graph and its strengths:
nodes and edges are emitted in ascending index order and no timestamps
or machine state leak in, so identical runs produce identical bytes.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .data import Variable, VariableTable
from .graphs import CausalGraph, parents
from .strength import StrengthMatrix

GRAPH_SCHEMA_VERSION = 1


def _label(v: Variable) -> str:
    if v.denotation:
        return f"{v.name} [{v.denotation}]"
    return v.name


# -- JSON ---------------------------------------------------------------------


def emit_json(
    graph: CausalGraph,
    strengths: StrengthMatrix | None = None,
    config: dict | None = None,
    metrics: dict | None = None,
) -> str:
    """Serialize a graph (with per-edge strengths) to canonical JSON.

    Keys are sorted and the edge list is ordered by (from, to); parsing
    the result with :func:`parse_graph_json` reconstructs the graph.
    """
    variables = [
        {
            "index": i,
            "name": v.name,
            "denotation": v.denotation,
            "kind": v.kind,
        }
        for i, v in enumerate(graph.variables)
    ]
    edge_list = []
    for i, j in graph.edges():
        value = graph.strengths.get((i, j))
        if value is None and strengths is not None:
            recorded = strengths.log_strength[i, j]
            value = None if math.isnan(recorded) else float(recorded)
        degenerate = bool(strengths.degenerate[i, j]) if strengths is not None else False
        edge_list.append(
            {
                "from": i,
                "to": j,
                "log_strength": value,
                "degenerate_flag": degenerate,
            }
        )
    payload = {
        "version": GRAPH_SCHEMA_VERSION,
        "variables": variables,
        "edges": edge_list,
        "config": config or {},
        "metrics": metrics or {},
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def parse_graph_json(text: str) -> CausalGraph:
    """Rebuild a CausalGraph from :func:`emit_json` output."""
    payload = json.loads(text)
    version = payload.get("version")
    if version != GRAPH_SCHEMA_VERSION:
        raise ValueError(f"unsupported graph schema version {version!r}")
    entries = sorted(payload["variables"], key=lambda e: e["index"])
    if [e["index"] for e in entries] != list(range(len(entries))):
        raise ValueError("variable indices must be 0..d-1 without gaps")
    table = VariableTable(
        tuple(
            Variable(e["name"], e.get("kind", "continuous"), e.get("denotation"))
            for e in entries
        )
    )
    d = len(table)
    adjacency = np.zeros((d, d), dtype=np.int64)
    strengths: dict[tuple[int, int], float] = {}
    for e in payload["edges"]:
        i, j = int(e["from"]), int(e["to"])
        adjacency[i, j] = 1
        if e.get("log_strength") is not None:
            strengths[(i, j)] = float(e["log_strength"])
    return CausalGraph(adjacency=adjacency, variables=table, strengths=strengths)


# -- DOT ----------------------------------------------------------------------


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def emit_dot(graph: CausalGraph) -> str:
    """Graphviz source: nodes labeled with name and denotation, edges
    labeled with log strength to 2 decimals, both in ascending index order."""
    lines = ["digraph causal {", "  rankdir=LR;"]
    for i, v in enumerate(graph.variables):
        lines.append(f"  v{i} [label={_dot_quote(_label(v))}];")
    for i, j in graph.edges():
        value = graph.strengths.get((i, j))
        if value is None:
            lines.append(f"  v{i} -> v{j};")
        else:
            lines.append(f"  v{i} -> v{j} [label={_dot_quote(f'{value:.2f}')}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- markdown report ----------------------------------------------------------


def _indirect_paths(
    graph: CausalGraph, target: int, max_len: int
) -> list[tuple[list[int], float]]:
    """Simple directed paths of 2..max_len edges ending at the target,
    each paired with its weakest edge strength."""
    adj = graph.adjacency
    found: list[tuple[list[int], float]] = []

    def extend(path: list[int]) -> None:
        if len(path) - 1 >= max_len:
            return
        for p in sorted(parents(adj, path[0])):
            if p in path:
                continue
            longer = [p] + path
            if len(longer) - 1 >= 2:
                weakest = min(
                    graph.strengths.get((a, b), math.nan)
                    for a, b in zip(longer, longer[1:])
                )
                found.append((longer, weakest))
            extend(longer)

    extend([target])
    found.sort(key=lambda item: (-item[1], item[0]))
    return found


def _components_without(graph: CausalGraph, target: int) -> list[list[int]]:
    """Weakly connected components that do not contain the target,
    skipping isolated nodes."""
    d = graph.d
    root = list(range(d))

    def find(a: int) -> int:
        while root[a] != a:
            root[a] = root[root[a]]
            a = root[a]
        return a

    for i, j in graph.edges():
        ri, rj = find(i), find(j)
        if ri != rj:
            root[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for node in range(d):
        groups.setdefault(find(node), []).append(node)
    target_root = find(target)
    return [
        sorted(members)
        for head, members in sorted(groups.items())
        if head != target_root and len(members) > 1
    ]


def emit_report(
    graph: CausalGraph,
    strengths: StrengthMatrix,
    target: str,
    dropped_columns: tuple[str, ...] = (),
    dropped_rows: int = 0,
    repaired: bool = False,
    max_path_length: int = 3,
) -> str:
    """Plain-markdown narrative of what drives the target variable.

    Sections: direct causes ranked by strength, indirect paths up to
    ``max_path_length`` edges with their weakest link, relationship
    clusters not touching the target, and data-quality notes.
    """
    table = graph.variables
    t = table.index(target)
    label = _label(table[t])
    lines = [f"# Causal findings for {label}", ""]

    direct = sorted(
        ((graph.strengths.get((p, t), math.nan), p) for p in parents(graph.adjacency, t)),
        key=lambda item: (-item[0], item[1]),
    )
    lines.append(f"## Direct causes of {label}")
    lines.append("")
    if direct:
        for value, p in direct:
            lines.append(f"- {_label(table[p])}: log strength {value:.2f}")
    else:
        lines.append(f"No direct causes of {label} survived pruning.")
    lines.append("")

    paths = _indirect_paths(graph, t, max_path_length)
    lines.append(f"## Indirect paths into {label} (up to {max_path_length} hops)")
    lines.append("")
    if paths:
        for path, weakest in paths:
            chain = " -> ".join(_label(table[n]) for n in path)
            lines.append(f"- {chain} (weakest link {weakest:.2f})")
    else:
        lines.append("No multi-step paths reach the target.")
    lines.append("")

    clusters = _components_without(graph, t)
    lines.append("## Relationships away from the target")
    lines.append("")
    if clusters:
        for members in clusters:
            names = ", ".join(_label(table[n]) for n in members)
            lines.append(f"- Cluster: {names}")
            for i, j in graph.edges():
                if i in members and j in members:
                    value = graph.strengths.get((i, j), math.nan)
                    lines.append(
                        f"  - {_label(table[i])} -> {_label(table[j])} ({value:.2f})"
                    )
    else:
        lines.append("Every connected variable links to the target.")
    lines.append("")

    lines.append("## Data quality notes")
    lines.append("")
    lines.append(f"- Rows dropped at ingestion for missing cells: {dropped_rows}")
    if dropped_columns:
        lines.append(
            "- Columns dropped as near-duplicates: " + ", ".join(dropped_columns)
        )
    else:
        lines.append("- Columns dropped as near-duplicates: none")
    tied = [
        (table[i].name, est.tie_corrections, est.n)
        for i, est in enumerate(strengths.entropies)
        if est.tie_corrections > 0
    ]
    if tied:
        for name, count, n in tied:
            share = count / (n - 1)
            lines.append(
                f"- {name}: {count} tied spacings out of {n - 1} ({share:.0%});"
                " entropy estimate is coarse for discrete-valued columns"
            )
    else:
        lines.append("- No tied spacings; entropy estimates are clean.")
    degenerate = [
        (i, j)
        for i, j in graph.edges()
        if strengths.degenerate[i, j]
    ]
    if degenerate:
        for i, j in degenerate:
            lines.append(
                f"- Strength capped for {_label(table[i])} -> {_label(table[j])}"
                " (entropy gap below resolution)"
            )
    if repaired:
        lines.append(
            "- Search never sampled an acyclic graph; the reported graph was"
            " repaired by deleting weak edges from the best cyclic candidate."
        )
    lines.append("")
    return "\n".join(lines)
