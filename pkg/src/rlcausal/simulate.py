"""Synthetic structural-model benchmarks.

Samples random DAGs, attaches additive-noise mechanisms, and emits data:

    x_j = f_j(x_parents(j)) + n_j,   n_j ~ N(0, sigma_j^2)

Linear mechanisms sum weighted parents; quadratic ones add a squared
term per parent, which breaks the score symmetry that makes linear
Gaussian pairs orientation-ambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, VariableTable
from .graphs import as_adjacency, is_dag, topological_order

MECHANISMS = ("linear", "quadratic")


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for random model generation.

    Weight magnitudes stay in ``weight_range`` (bounded away from zero so
    every edge is detectable); signs are random.
    """

    d: int
    edge_probability: float = 0.3
    mechanism: str = "linear"
    weight_range: tuple[float, float] = (0.5, 2.0)
    noise_scale_range: tuple[float, float] = (0.5, 2.0)
    samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        if not 0.0 <= self.edge_probability <= 1.0:
            raise ValueError("edge_probability must lie in [0, 1]")
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}")
        lo, hi = self.weight_range
        if not 0.0 < lo <= hi:
            raise ValueError("weight_range must satisfy 0 < lo <= hi")
        lo, hi = self.noise_scale_range
        if not 0.0 < lo <= hi:
            raise ValueError("noise_scale_range must satisfy 0 < lo <= hi")
        if self.samples < 2:
            raise ValueError("samples must be at least 2")


@dataclass(frozen=True)
class StructuralModel:
    """A DAG plus the additive-noise mechanisms sitting on its edges."""

    adjacency: np.ndarray
    weights: np.ndarray
    noise_scales: np.ndarray
    quad_weights: np.ndarray | None = None
    intercepts: np.ndarray | None = None

    def __post_init__(self):
        adj = as_adjacency(self.adjacency)
        if not is_dag(adj):
            raise ValueError("structural model requires an acyclic graph")
        d = adj.shape[0]
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.shape != (d, d):
            raise ValueError(f"weights must be {d}x{d}, got {weights.shape}")
        if np.any((adj == 0) & (weights != 0.0)):
            raise ValueError("nonzero weight on a missing edge")
        scales = np.asarray(self.noise_scales, dtype=np.float64)
        if scales.shape != (d,) or np.any(scales <= 0):
            raise ValueError("noise_scales must be d positive values")
        quad = self.quad_weights
        if quad is not None:
            quad = np.asarray(quad, dtype=np.float64)
            if quad.shape != (d, d):
                raise ValueError(f"quad_weights must be {d}x{d}, got {quad.shape}")
            if np.any((adj == 0) & (quad != 0.0)):
                raise ValueError("nonzero quadratic weight on a missing edge")
        icept = self.intercepts
        if icept is None:
            icept = np.zeros(d)
        else:
            icept = np.asarray(icept, dtype=np.float64)
            if icept.shape != (d,):
                raise ValueError("intercepts must have length d")
        for name, arr in (
            ("adjacency", adj),
            ("weights", weights),
            ("noise_scales", scales),
            ("quad_weights", quad),
            ("intercepts", icept),
        ):
            if arr is not None:
                arr = arr.copy()
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def d(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())


def random_dag(
    d: int, edge_probability: float, rng: np.random.Generator
) -> np.ndarray:
    """Sample a DAG by thinning edges under a uniformly random order.

    A random permutation fixes which orientations are legal; each legal
    pair gets an edge independently with the given probability.
    """
    order = rng.permutation(d)
    rank = np.empty(d, dtype=np.int64)
    rank[order] = np.arange(d)
    adj = np.zeros((d, d), dtype=np.int64)
    for i in range(d):
        for j in range(d):
            if rank[i] < rank[j] and rng.random() < edge_probability:
                adj[i, j] = 1
    return adj


def random_model(cfg: GeneratorConfig, adjacency: np.ndarray | None = None) -> StructuralModel:
    """Draw a structural model from the config; optionally fix the graph."""
    rng = np.random.default_rng(cfg.seed)
    if adjacency is None:
        adj = random_dag(cfg.d, cfg.edge_probability, rng)
    else:
        adj = as_adjacency(adjacency)
        if adj.shape[0] != cfg.d:
            raise ValueError(f"adjacency is {adj.shape[0]}x{adj.shape[0]} but cfg.d={cfg.d}")
        if not is_dag(adj):
            raise ValueError("fixed adjacency must be acyclic")
    lo, hi = cfg.weight_range
    magnitude = rng.uniform(lo, hi, size=(cfg.d, cfg.d))
    sign = np.where(rng.random((cfg.d, cfg.d)) < 0.5, -1.0, 1.0)
    weights = magnitude * sign * adj
    quad = None
    if cfg.mechanism == "quadratic":
        magnitude = rng.uniform(lo, hi, size=(cfg.d, cfg.d))
        sign = np.where(rng.random((cfg.d, cfg.d)) < 0.5, -1.0, 1.0)
        quad = magnitude * sign * adj
    nlo, nhi = cfg.noise_scale_range
    scales = rng.uniform(nlo, nhi, size=cfg.d)
    return StructuralModel(
        adjacency=adj, weights=weights, noise_scales=scales, quad_weights=quad
    )


def generate(
    model: StructuralModel, m: int, seed: int | np.random.Generator
) -> Dataset:
    """Draw m i.i.d. samples by evaluating mechanisms in topological order."""
    if m < 1:
        raise ValueError("m must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d = model.d
    noise = rng.normal(size=(m, d)) * model.noise_scales
    x = np.zeros((m, d))
    for j in topological_order(model.adjacency):
        contribution = x @ model.weights[:, j]
        if model.quad_weights is not None:
            contribution = contribution + (x**2) @ model.quad_weights[:, j]
        x[:, j] = model.intercepts[j] + contribution + noise[:, j]
    names = tuple(f"X{i + 1}" for i in range(d))
    return Dataset(samples=x, variables=VariableTable.from_names(names))


def structural_hamming_distance(a: np.ndarray, b: np.ndarray) -> int:
    """Edge-set distance where a reversed edge counts once, not twice."""
    a = as_adjacency(a)
    b = as_adjacency(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    a_only = int(np.sum((a == 1) & (b == 0)))
    b_only = int(np.sum((b == 1) & (a == 0)))
    reversed_edges = int(np.sum((a == 1) & (b == 0) & (b.T == 1) & (a.T == 0)))
    return a_only + b_only - reversed_edges
