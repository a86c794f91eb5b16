"""Full pipeline runs on a small synthetic CSV plus config-file handling."""

import json
import logging

import numpy as np
import pytest

from rlcausal.graphs import is_dag
from rlcausal.pipeline import (
    ConfigError,
    PipelineConfig,
    PipelineStageError,
    config_from_file,
    run,
)
from rlcausal.report import parse_graph_json
from rlcausal.simulate import GeneratorConfig, generate, random_model

ARTIFACTS = (
    "graph.json", "graph.dot", "report.md", "metrics.jsonl", "config.snapshot.json"
)


def _write_csv(path, ds):
    rows = [",".join(ds.variables.names)]
    rows += [",".join(repr(v) for v in row) for row in ds.samples]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


@pytest.fixture(scope="module")
def chain_csv(tmp_path_factory):
    chain = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
    model = random_model(GeneratorConfig(d=3, seed=5), adjacency=chain)
    ds = generate(model, 150, seed=6)
    path = tmp_path_factory.mktemp("data") / "chain.csv"
    _write_csv(path, ds)
    return path


def _small_config(csv_path, out_dir, **overrides):
    base = dict(
        data_path=str(csv_path),
        target="X3",
        out_dir=str(out_dir),
        iterations=60,
        graphs_per_iter=8,
        batch_size=32,
        d_model=16,
        n_layers=1,
        n_heads=2,
        seed=11,
    )
    base.update(overrides)
    return PipelineConfig(**base)


def test_run_writes_all_artifacts(chain_csv, tmp_path):
    cfg = _small_config(chain_csv, tmp_path / "out")
    artifacts = run(cfg)
    for name in ARTIFACTS:
        assert (tmp_path / "out" / name).is_file(), name
    assert is_dag(artifacts.graph.adjacency)
    assert set(artifacts.timings) >= {"load", "train", "polish", "strength", "emit"}

    rebuilt = parse_graph_json((tmp_path / "out" / "graph.json").read_text())
    np.testing.assert_array_equal(rebuilt.adjacency, artifacts.graph.adjacency)

    lines = (tmp_path / "out" / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == cfg.iterations
    first = json.loads(lines[0])
    assert first["iteration"] == 0

    snapshot = json.loads((tmp_path / "out" / "config.snapshot.json").read_text())
    assert snapshot == cfg.to_dict()


def test_identical_runs_reproduce_graph_json_bytes(chain_csv, tmp_path):
    cfg = _small_config(chain_csv, tmp_path / "out")
    run(cfg)
    first = (tmp_path / "out" / "graph.json").read_bytes()
    run(cfg)
    assert (tmp_path / "out" / "graph.json").read_bytes() == first


def test_polish_can_be_disabled(chain_csv, tmp_path):
    cfg = _small_config(chain_csv, tmp_path / "out", polish=False)
    artifacts = run(cfg)
    assert "polish" not in artifacts.timings
    assert is_dag(artifacts.graph.adjacency)


def test_missing_target_fails_before_artifacts(chain_csv, tmp_path):
    out = tmp_path / "out"
    cfg = _small_config(chain_csv, out, target="nope")
    with pytest.raises(ConfigError, match="target"):
        run(cfg)
    assert not out.exists()


def test_missing_data_file_raises_before_training(tmp_path):
    cfg = _small_config(tmp_path / "absent.csv", tmp_path / "out")
    with pytest.raises(Exception) as excinfo:
        run(cfg)
    assert not isinstance(excinfo.value, PipelineStageError)


def test_bad_schema_path_is_a_config_error(chain_csv, tmp_path):
    cfg = _small_config(
        chain_csv, tmp_path / "out", schema_path=str(tmp_path / "absent.json")
    )
    with pytest.raises(ConfigError, match="schema"):
        run(cfg)


def test_stage_failure_reports_stage_and_manifest(chain_csv, tmp_path, monkeypatch):
    def boom(graph, ds):
        raise RuntimeError("boom")

    monkeypatch.setattr("rlcausal.pipeline.edge_strengths", boom)
    cfg = _small_config(chain_csv, tmp_path / "out")
    with pytest.raises(PipelineStageError) as excinfo:
        run(cfg)
    assert excinfo.value.stage == "strength"
    assert "metrics" in excinfo.value.manifest


def test_batch_size_clamps_to_available_rows(chain_csv, tmp_path, caplog):
    cfg = _small_config(
        chain_csv, tmp_path / "out", batch_size=500, iterations=20
    )
    with caplog.at_level(logging.WARNING, logger="rlcausal.pipeline"):
        artifacts = run(cfg)
    assert any("exceeds" in r.getMessage() for r in caplog.records)
    assert is_dag(artifacts.graph.adjacency)


def test_config_from_file_round_trip_and_overrides(chain_csv, tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "data_path": str(chain_csv),
        "target": "X3",
        "out_dir": str(tmp_path / "out"),
        "iterations": 40,
    }))
    cfg = config_from_file(path)
    assert cfg.iterations == 40
    cfg = config_from_file(path, overrides={"iterations": 7, "seed": 2})
    assert cfg.iterations == 7 and cfg.seed == 2


@pytest.mark.parametrize("payload, match", [
    ({"data_path": "x", "target": "y", "out_dir": "o", "bogus": 1}, "unknown keys"),
    ({"target": "y", "out_dir": "o"}, "data_path"),
    ([1, 2, 3], "JSON object"),
])
def test_config_from_file_rejects_bad_payloads(tmp_path, payload, match):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ConfigError, match=match):
        config_from_file(path)


def test_config_from_file_rejects_invalid_json_and_missing_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="valid JSON"):
        config_from_file(path)
    with pytest.raises(ConfigError, match="cannot read"):
        config_from_file(tmp_path / "absent.json")
