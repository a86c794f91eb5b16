"""Binary directed graphs: DAG tests, acyclicity penalty, orderings.

Edge convention, fixed globally: ``adjacency[i, j] == 1`` means the edge
i -> j, i.e. variable i is a direct cause (parent) of variable j.
Diagonals are always zero; self-loops are disallowed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import VariableTable

#: h(A) values at or below this are treated as exactly acyclic.
ACYCLICITY_TOL = 1e-9


def as_adjacency(a) -> np.ndarray:
    """Validate and coerce to a square binary int adjacency with zero diagonal."""
    arr = np.asarray(a)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("adjacency entries must be 0 or 1")
    arr = arr.astype(np.int64)
    if np.trace(arr) != 0:
        raise ValueError("adjacency diagonal must be zero (no self-loops)")
    return arr


def is_dag(a) -> bool:
    """True iff the graph has no directed cycle, by iterative in-degree peeling."""
    adj = as_adjacency(a)
    d = adj.shape[0]
    indegree = adj.sum(axis=0)
    active = np.ones(d, dtype=bool)
    removed = 0
    frontier = [int(j) for j in np.flatnonzero((indegree == 0) & active)]
    while frontier:
        node = frontier.pop()
        active[node] = False
        removed += 1
        for child in np.flatnonzero(adj[node]):
            indegree[child] -= 1
            if indegree[child] == 0 and active[child]:
                frontier.append(int(child))
    return removed == d


def acyclicity_penalty(a) -> float:
    """h(A) = trace(e^A) - d, evaluated by summing trace(A^k)/k! to convergence.

    Every term is exactly zero on a DAG (no closed walks), so DAGs return
    0.0 exactly; any cycle makes the sum strictly positive.
    """
    adj = as_adjacency(a).astype(np.float64)
    d = adj.shape[0]
    total = 0.0
    power = adj.copy()  # A^k / k!
    k = 1
    while True:
        total += float(np.trace(power))
        if not power.any():
            break
        if k >= d and float(np.abs(power).max()) / (k + 1) < 1e-16 * (1.0 + total):
            break
        k += 1
        if k > 500:  # unreachable for sane d; guards pathological input
            break
        power = power @ adj / k
    return total


def parents(a, j: int) -> set[int]:
    """Direct causes of node j: {i : a[i, j] == 1}."""
    adj = as_adjacency(a)
    if not 0 <= j < adj.shape[0]:
        raise IndexError(f"node index {j} out of range for d={adj.shape[0]}")
    return {int(i) for i in np.flatnonzero(adj[:, j])}


def topological_order(a) -> list[int]:
    """Node order compatible with all edges; ties broken by ascending index."""
    import heapq

    adj = as_adjacency(a)
    d = adj.shape[0]
    indegree = adj.sum(axis=0).astype(int)
    ready = [int(j) for j in range(d) if indegree[j] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for child in np.flatnonzero(adj[node]):
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, int(child))
    if len(order) != d:
        raise ValueError("graph is cyclic; no topological order exists")
    return order


def edges(a) -> list[tuple[int, int]]:
    """Present edges as (cause, effect) pairs in ascending (i, j) order."""
    adj = as_adjacency(a)
    return [(int(i), int(j)) for i, j in np.argwhere(adj)]


@dataclass(frozen=True)
class CausalGraph:
    """A learned structure: adjacency, variable metadata, optional edge strengths."""

    adjacency: np.ndarray
    variables: VariableTable
    strengths: dict[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        adj = as_adjacency(self.adjacency).copy()
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        if adj.shape[0] != len(self.variables):
            raise ValueError(
                f"adjacency is {adj.shape[0]}x{adj.shape[0]} but there are "
                f"{len(self.variables)} variables"
            )
        present = {(i, j) for i, j in np.argwhere(adj)}
        extras = set(self.strengths) - present
        if extras:
            raise ValueError(f"strength keys for absent edges: {sorted(extras)}")

    @property
    def d(self) -> int:
        return self.adjacency.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        return edges(self.adjacency)

    def parents(self, j: int) -> set[int]:
        return parents(self.adjacency, j)

    def with_strengths(self, strengths: dict[tuple[int, int], float]) -> "CausalGraph":
        return CausalGraph(self.adjacency, self.variables, dict(strengths))
