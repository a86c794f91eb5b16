"""Command-line front end.

Three subcommands: ``discover`` runs the full pipeline on a CSV,
``synth`` writes a synthetic benchmark (data plus ground truth), and
``score`` rates an existing graph file against a dataset. Exit codes:
0 success, 2 bad input or configuration, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import IngestionError, encode_categoricals, load_csv, standardize
from .pipeline import ConfigError, PipelineConfig, PipelineStageError, config_from_file
from .pipeline import run as run_pipeline
from .report import parse_graph_json
from .scoring import BICScorer
from .simulate import GeneratorConfig, generate, random_model

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlcausal",
        description="Causal structure discovery with RL search and entropy-rated edges",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)

    disc = sub.add_parser("discover", help="learn a causal graph from a CSV")
    disc.add_argument("--data", required=True, help="input CSV with a header row")
    disc.add_argument("--schema", default=None, help="optional JSON schema for columns")
    disc.add_argument("--target", required=True, help="variable the report focuses on")
    disc.add_argument("--config", default=None, help="JSON config file; flags override it")
    disc.add_argument("--iterations", type=int, default=None)
    disc.add_argument("--lr", type=float, default=None, help="actor learning rate")
    disc.add_argument("--critic-lr", type=float, default=None)
    disc.add_argument("--lambda1", type=float, default=None, help="cyclic-graph penalty weight")
    disc.add_argument("--lambda2", type=float, default=None, help="acyclicity h(A) penalty weight")
    disc.add_argument("--anneal-interval", type=int, default=None, help="iterations between penalty doublings")
    disc.add_argument("--batch-size", type=int, default=None, help="rows fed to the encoder")
    disc.add_argument("--graphs-per-iter", type=int, default=None)
    disc.add_argument("--d-model", type=int, default=None)
    disc.add_argument("--n-layers", type=int, default=None)
    disc.add_argument("--n-heads", type=int, default=None)
    disc.add_argument("--features", choices=("linear", "quadratic"), default=None)
    disc.add_argument("--correlation-threshold", type=float, default=None)
    disc.add_argument("--prune-threshold", type=float, default=None)
    disc.add_argument(
        "--positional-encoding",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="give variables position identities (on unless disabled)",
    )
    disc.add_argument(
        "--polish",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="greedy single-edge score polish after the search (on unless disabled)",
    )
    disc.add_argument("--seed", type=int, default=None)
    disc.add_argument("--out", required=True, help="output directory")

    syn = sub.add_parser("synth", help="write a synthetic benchmark dataset")
    syn.add_argument("--d", type=int, required=True, help="number of variables")
    syn.add_argument("--edge-prob", type=float, default=0.3)
    syn.add_argument("--samples", type=int, default=1000)
    syn.add_argument("--mechanism", choices=("linear", "quadratic"), default="linear")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--out", required=True, help="output directory")

    sc = sub.add_parser("score", help="BIC of a given graph on a dataset")
    sc.add_argument("--data", required=True)
    sc.add_argument("--graph", required=True, help="graph.json or ground-truth JSON")
    sc.add_argument("--features", choices=("linear", "quadratic"), default="linear")
    return parser


_FLAG_FIELDS = {
    "iterations": "iterations",
    "lr": "actor_lr",
    "critic_lr": "critic_lr",
    "lambda1": "lambda1",
    "lambda2": "lambda2",
    "anneal_interval": "anneal_interval",
    "batch_size": "batch_size",
    "graphs_per_iter": "graphs_per_iter",
    "d_model": "d_model",
    "n_layers": "n_layers",
    "n_heads": "n_heads",
    "features": "features",
    "correlation_threshold": "correlation_threshold",
    "prune_threshold": "prune_threshold",
    "positional_encoding": "positional_encoding",
    "polish": "polish",
    "seed": "seed",
}


def _discover(args: argparse.Namespace) -> int:
    overrides = {
        "data_path": args.data,
        "target": args.target,
        "out_dir": args.out,
        "schema_path": args.schema,
    }
    if args.schema is None:
        del overrides["schema_path"]
    for attr, field_name in _FLAG_FIELDS.items():
        value = getattr(args, attr)
        if value is not None:
            overrides[field_name] = value
    if args.config is not None:
        cfg = config_from_file(args.config, overrides)
    else:
        try:
            cfg = PipelineConfig(**overrides)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    artifacts = run_pipeline(cfg)
    for kind, path in sorted(artifacts.paths.items()):
        print(f"{kind}: {path}")
    return 0


def _synth(args: argparse.Namespace) -> int:
    cfg = GeneratorConfig(
        d=args.d,
        edge_probability=args.edge_prob,
        mechanism=args.mechanism,
        samples=args.samples,
        seed=args.seed,
    )
    model = random_model(cfg)
    ds = generate(model, cfg.samples, np.random.default_rng(cfg.seed + 1))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "data.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(ds.variables.names) + "\n")
        for row in ds.samples:
            # repr(float) is the shortest exact round-trip form
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    truth_path = out_dir / "truth.json"
    truth = {
        "version": 1,
        "variables": list(ds.variables.names),
        "adjacency": model.adjacency.tolist(),
        "mechanism": cfg.mechanism,
        "seed": cfg.seed,
    }
    truth_path.write_text(json.dumps(truth, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"data: {csv_path}")
    print(f"truth: {truth_path}")
    return 0


def _load_adjacency(path: str) -> np.ndarray:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read graph file {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"graph file {path} is not valid JSON: {exc}") from exc
    if "adjacency" in payload:
        return np.asarray(payload["adjacency"], dtype=np.int64)
    try:
        return parse_graph_json(text).adjacency
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"graph file {path} is neither a graph nor a truth file: {exc}") from exc


def _score(args: argparse.Namespace) -> int:
    adjacency = _load_adjacency(args.graph)
    ds = standardize(encode_categoricals(load_csv(args.data)))
    if adjacency.shape[0] != ds.d:
        raise ConfigError(
            f"graph has {adjacency.shape[0]} nodes but data has {ds.d} columns"
        )
    scorer = BICScorer(ds, features=args.features)
    print(f"bic: {scorer.score(adjacency):.6f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {"discover": _discover, "synth": _synth, "score": _score}
    try:
        return handlers[args.command](args)
    except (ConfigError, IngestionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineStageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.manifest:
            print(f"partial artifacts: {exc.manifest}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
