"""Scikit-learn style front ends for the discovery engine.

``CausalDiscovery`` is a fit-once estimator: ``fit(X)`` learns a pruned
causal graph over the columns of X and exposes it through fitted
attributes. ``CollinearColumnFilter`` is a plain transformer wrapping
the near-duplicate column drop, usable inside pipelines.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import Dataset, PreprocessConfig, VariableTable, multicollinearity_filter, standardize
from .graphs import CausalGraph
from .policy import PolicyConfig, TrainerConfig, train
from .scoring import AnnealSchedule, BICScorer, RewardConfig, local_search
from .strength import edge_strengths, prune_graph


def _column_names(X) -> list[str] | None:
    names = getattr(X, "columns", None)
    if names is None:
        return None
    return [str(n) for n in names]


class CausalDiscovery(BaseEstimator):
    """Learn a directed causal graph over the columns of X.

    Parameters mirror the pipeline defaults; ``random_state`` seeds the
    whole search. After ``fit``:

    Attributes:
        graph_: pruned CausalGraph with per-edge log strengths.
        adjacency_: its adjacency matrix (adjacency_[i, j] = 1 for i -> j).
        strengths_: StrengthMatrix over the unpruned search result.
        state_: TrainState with per-iteration logs.
    """

    def __init__(
        self,
        iterations: int = 2000,
        graphs_per_iter: int = 32,
        batch_size: int = 64,
        d_model: int = 64,
        n_layers: int = 2,
        n_heads: int = 4,
        actor_lr: float = 1e-3,
        critic_lr: float = 1e-3,
        lambda1: float = 0.0,
        lambda2: float = 1e-4,
        anneal_interval: int = 10,
        features: str = "linear",
        polish: bool = True,
        prune_threshold: float = 0.1,
        random_state: int = 0,
    ):
        self.iterations = iterations
        self.graphs_per_iter = graphs_per_iter
        self.batch_size = batch_size
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.actor_lr = actor_lr
        self.critic_lr = critic_lr
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.anneal_interval = anneal_interval
        self.features = features
        self.polish = polish
        self.prune_threshold = prune_threshold
        self.random_state = random_state

    def _dataset(self, X) -> Dataset:
        names = _column_names(X)
        X = check_array(X, dtype=np.float64, ensure_min_samples=2, ensure_min_features=2)
        if names is None:
            names = [f"X{i + 1}" for i in range(X.shape[1])]
        table = VariableTable.from_names(names)
        return standardize(Dataset(samples=X, variables=table))

    def fit(self, X, y=None):
        """Run the search on X (rows are samples, columns are variables)."""
        ds = self._dataset(X)
        self.n_features_in_ = ds.d
        batch = min(self.batch_size, ds.m)
        cfg = TrainerConfig(
            iterations=self.iterations,
            graphs_per_iter=self.graphs_per_iter,
            batch_size=batch,
            actor_lr=self.actor_lr,
            critic_lr=self.critic_lr,
            reward=RewardConfig(
                lambda1=self.lambda1,
                lambda2=self.lambda2,
                schedule=AnnealSchedule(interval=self.anneal_interval),
            ),
            seed=self.random_state,
        )
        policy = PolicyConfig(
            d=ds.d,
            batch_size=batch,
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
        )
        scorer = BICScorer(ds, features=self.features)
        graph, state = train(cfg, ds, scorer, policy)
        if self.polish:
            graph = CausalGraph(local_search(graph.adjacency, scorer), graph.variables)
        strengths = edge_strengths(graph, ds)
        self.graph_ = prune_graph(graph, strengths, self.prune_threshold)
        self.adjacency_ = self.graph_.adjacency
        self.strengths_ = strengths
        self.state_ = state
        return self

    def score(self, X, y=None) -> float:
        """Negative BIC of the learned graph on new data (higher is better)."""
        check_is_fitted(self, "graph_")
        ds = self._dataset(X)
        if ds.d != self.n_features_in_:
            raise ValueError(
                f"X has {ds.d} features but the graph was learned on {self.n_features_in_}"
            )
        return -BICScorer(ds, features=self.features).score(self.adjacency_)


class CollinearColumnFilter(BaseEstimator, TransformerMixin):
    """Drop the later column of every pair with |corr| above the threshold."""

    def __init__(self, threshold: float = 0.95):
        self.threshold = threshold

    def fit(self, X, y=None):
        names = _column_names(X)
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if names is None:
            names = [f"X{i + 1}" for i in range(X.shape[1])]
        ds = Dataset(samples=X, variables=VariableTable.from_names(names))
        cfg = PreprocessConfig(correlation_threshold=self.threshold)
        kept_ds, dropped = multicollinearity_filter(ds, cfg)
        self.n_features_in_ = X.shape[1]
        self.dropped_names_ = tuple(dropped)
        self.keep_indices_ = np.array(
            [i for i, v in enumerate(ds.variables) if v.name in kept_ds.variables.names],
            dtype=np.int64,
        )
        self.feature_names_out_ = tuple(kept_ds.variables.names)
        return self

    def transform(self, X):
        check_is_fitted(self, "keep_indices_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return X[:, self.keep_indices_]

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "feature_names_out_")
        return np.asarray(self.feature_names_out_, dtype=object)
