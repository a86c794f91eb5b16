"""End-to-end discovery run: preprocess, search, rate, prune, emit.

One flat config drives the whole run and is snapshotted verbatim next
to the outputs, so a run can be reproduced bit for bit from its own
artifacts. Stage failures surface the stage name plus whatever files
were already written.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .data import (
    Dataset,
    IngestionError,
    PreprocessConfig,
    encode_categoricals,
    load_csv,
    load_schema,
    multicollinearity_filter,
    standardize,
)
from .graphs import CausalGraph
from .policy import PolicyConfig, TrainerConfig, TrainState, train
from .report import emit_dot, emit_json, emit_report
from .scoring import AnnealSchedule, BICScorer, RewardConfig, local_search
from .strength import StrengthMatrix, edge_strengths, prune_graph

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid configuration or input discovered before heavy work starts."""


class PipelineStageError(RuntimeError):
    """A stage failed mid-run; carries the stage and the files already written."""

    def __init__(self, stage: str, manifest: dict[str, str], cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.manifest = dict(manifest)


@dataclass(frozen=True)
class PipelineConfig:
    """Flat run settings, mirroring the CLI flags one to one."""

    data_path: str
    target: str
    out_dir: str
    schema_path: str | None = None
    correlation_threshold: float = 0.95
    iterations: int = 2000
    graphs_per_iter: int = 32
    batch_size: int = 64
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    lambda1: float = 0.0
    lambda2: float = 1e-4
    anneal_interval: int = 10
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    positional_encoding: bool = True
    features: str = "linear"
    polish: bool = True
    prune_threshold: float = 0.1
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunArtifacts:
    """Everything a finished run produced, in memory and on disk."""

    graph: CausalGraph
    strengths: StrengthMatrix
    state: TrainState
    paths: dict[str, str]
    timings: dict[str, float] = field(default_factory=dict)


def _load_config_file(path: str | Path) -> dict:
    try:
        with Path(path).open(encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"config file {path} has unknown keys: {unknown}")
    return raw


def config_from_file(path: str | Path, overrides: dict | None = None) -> PipelineConfig:
    """Build a config from a JSON file; explicit overrides win."""
    merged = _load_config_file(path)
    merged.update(overrides or {})
    try:
        return PipelineConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def run(cfg: PipelineConfig) -> RunArtifacts:
    """Execute the full discovery pipeline and persist every artifact.

    Raises ConfigError (or IngestionError) for bad inputs before any
    training happens; later failures raise PipelineStageError.
    """
    timings: dict[str, float] = {}
    manifest: dict[str, str] = {}

    def clocked(stage: str, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except (ConfigError, IngestionError):
            raise
        except Exception as exc:
            raise PipelineStageError(stage, manifest, exc) from exc
        timings[stage] = time.perf_counter() - start
        logger.info("stage %s finished in %.2fs", stage, timings[stage])
        return result

    schema = None
    if cfg.schema_path is not None:
        try:
            schema = load_schema(cfg.schema_path)
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ConfigError(f"bad schema file {cfg.schema_path}: {exc}") from exc
    ds = clocked("load", lambda: load_csv(cfg.data_path, schema))
    if cfg.target not in ds.variables.names:
        raise ConfigError(
            f"target {cfg.target!r} is not a column of {cfg.data_path}"
        )

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    ds = clocked("encode", lambda: encode_categoricals(ds))
    pre = PreprocessConfig(
        target=cfg.target, correlation_threshold=cfg.correlation_threshold
    )
    ds, dropped_columns = clocked("filter", lambda: multicollinearity_filter(ds, pre))
    if dropped_columns:
        logger.info("dropped near-duplicate columns: %s", dropped_columns)
    ds = clocked("standardize", lambda: standardize(ds))
    if ds.d < 2:
        raise ConfigError("fewer than 2 variables remain after filtering")

    batch_size = min(cfg.batch_size, ds.m)
    if batch_size < cfg.batch_size:
        logger.warning(
            "batch_size %d exceeds the %d available rows; using %d",
            cfg.batch_size, ds.m, batch_size,
        )
    trainer_cfg = TrainerConfig(
        iterations=cfg.iterations,
        graphs_per_iter=cfg.graphs_per_iter,
        batch_size=batch_size,
        actor_lr=cfg.actor_lr,
        critic_lr=cfg.critic_lr,
        reward=RewardConfig(
            lambda1=cfg.lambda1,
            lambda2=cfg.lambda2,
            schedule=AnnealSchedule(interval=cfg.anneal_interval),
        ),
        seed=cfg.seed,
    )
    policy_cfg = PolicyConfig(
        d=ds.d,
        batch_size=batch_size,
        d_model=cfg.d_model,
        n_layers=cfg.n_layers,
        n_heads=cfg.n_heads,
        positional_encoding=cfg.positional_encoding,
    )
    scorer = BICScorer(ds, features=cfg.features)

    metrics_path = out_dir / "metrics.jsonl"

    def run_training() -> tuple[CausalGraph, TrainState]:
        with metrics_path.open("w", encoding="utf-8") as fh:
            def on_record(record: dict) -> None:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
            result = train(trainer_cfg, ds, scorer, policy_cfg, on_record)
        manifest["metrics"] = str(metrics_path)
        return result

    graph, state = clocked("train", run_training)
    if cfg.polish:
        def polish_graph() -> CausalGraph:
            adj = local_search(graph.adjacency, scorer)
            return CausalGraph(adj, graph.variables)
        graph = clocked("polish", polish_graph)
    strengths = clocked("strength", lambda: edge_strengths(graph, ds))
    pruned = clocked(
        "prune", lambda: prune_graph(graph, strengths, cfg.prune_threshold)
    )

    def emit() -> dict[str, str]:
        config_dict = cfg.to_dict()
        metrics = {
            "best_reward": state.best_reward,
            "iterations": state.iteration,
            "cyclic_fraction_final": state.logs[-1]["cyclic_fraction"],
        }
        paths = {"metrics": str(metrics_path)}
        json_path = out_dir / "graph.json"
        json_path.write_text(
            emit_json(pruned, strengths, config_dict, metrics), encoding="utf-8"
        )
        manifest["graph_json"] = paths["graph_json"] = str(json_path)
        dot_path = out_dir / "graph.dot"
        dot_path.write_text(emit_dot(pruned), encoding="utf-8")
        manifest["graph_dot"] = paths["graph_dot"] = str(dot_path)
        report_path = out_dir / "report.md"
        report_path.write_text(
            emit_report(
                pruned,
                strengths,
                cfg.target,
                dropped_columns=tuple(dropped_columns),
                dropped_rows=ds.dropped_rows,
                repaired=state.repaired,
            ),
            encoding="utf-8",
        )
        manifest["report"] = paths["report"] = str(report_path)
        snapshot_path = out_dir / "config.snapshot.json"
        snapshot_path.write_text(
            json.dumps(config_dict, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        manifest["config_snapshot"] = paths["config_snapshot"] = str(snapshot_path)
        return paths

    paths = clocked("emit", emit)
    return RunArtifacts(
        graph=pruned, strengths=strengths, state=state, paths=paths, timings=timings
    )
