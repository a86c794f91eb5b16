"""End-to-end acceptance gate.

Each test covers one shipping criterion at its stated tolerance and
prints a single PASS/FAIL line. The two search criteria run the full
training loop and dominate the suite's wall time.
"""

import math
import os
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from rlcausal.autodiff import Tape
from rlcausal.data import Dataset, dataco_schema_path, standardize
from rlcausal.graphs import acyclicity_penalty, is_dag
from rlcausal.pipeline import PipelineConfig, run
from rlcausal.policy import TrainerConfig, actor_loss_on_tape, init_actor_params, train
from rlcausal.policy import PolicyConfig
from rlcausal.scoring import BICScorer, all_dags, exhaustive_minimum, local_search
from rlcausal.simulate import (
    GeneratorConfig,
    generate,
    random_model,
    structural_hamming_distance,
)
from rlcausal.strength import digamma, spacing_entropy
from fdcheck import central_diff, relative_error


def _verdict(criterion: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    print(line)
    assert ok, line


def _search(ds, scorer, seed: int, iterations: int = 2000):
    cfg = TrainerConfig(
        iterations=iterations,
        graphs_per_iter=32,
        batch_size=min(64, ds.m),
        seed=seed,
    )
    graph, _ = train(cfg, ds, scorer)
    return local_search(graph.adjacency, scorer)


def test_criterion_1_search_matches_exhaustive_minimum_at_d4():
    model = random_model(GeneratorConfig(d=4, edge_probability=0.5, seed=7))
    assert np.unique(model.noise_scales).size == 4  # unequal noise
    ds = standardize(generate(model, 2000, seed=8))
    scorer = BICScorer(ds)
    best, _ = exhaustive_minimum(scorer)
    hits = 0
    worst_gap = 0.0
    slowest = 0.0
    for seed in (0, 1, 2):
        start = time.perf_counter()
        adj = _search(ds, scorer, seed)
        elapsed = time.perf_counter() - start
        slowest = max(slowest, elapsed)
        gap = (scorer.score(adj) - best) / abs(best)
        worst_gap = max(worst_gap, gap)
        if gap <= 0.01:
            hits += 1
    ok = hits >= 2 and slowest < 300.0
    _verdict(
        1,
        ok,
        f"{hits}/3 seeds within 1% of the 543-DAG minimum "
        f"(worst gap {worst_gap:.2e}, slowest run {slowest:.0f}s < 300s)",
    )


def test_criterion_2_structure_recovery_at_d8():
    shds = []
    slowest = 0.0
    for gen_seed, seed in zip((1, 2, 3), (0, 1, 2)):
        cfg = GeneratorConfig(
            d=8, edge_probability=0.4, mechanism="quadratic", seed=gen_seed
        )
        model = random_model(cfg)
        edges = int(model.adjacency.sum())
        assert 10 <= edges <= 12, edges
        ds = standardize(generate(model, 5000, seed=seed + 20))
        scorer = BICScorer(ds, features="quadratic")
        start = time.perf_counter()
        adj = _search(ds, scorer, seed=seed, iterations=3000)
        elapsed = time.perf_counter() - start
        slowest = max(slowest, elapsed)
        shds.append(structural_hamming_distance(adj, model.adjacency))
    med = statistics.median(shds)
    ok = med <= 3 and slowest < 900.0
    _verdict(
        2,
        ok,
        f"SHD per seed {shds}, median {med} <= 3 "
        f"(slowest run {slowest:.0f}s < 900s)",
    )


def test_criterion_3_penalty_zero_exactly_on_peeling_accepted_graphs():
    checked = 0
    dags = 0
    for bits in range(2 ** 6):
        m = np.zeros((3, 3), dtype=np.int64)
        off = [(i, j) for i in range(3) for j in range(3) if i != j]
        for k, (i, j) in enumerate(off):
            m[i, j] = (bits >> k) & 1
        agrees = (acyclicity_penalty(m) <= 1e-9) == is_dag(m)
        assert agrees, m
        checked += 1
        dags += int(is_dag(m))
    rng = np.random.default_rng(3)
    for _ in range(1000):
        d = int(rng.integers(2, 7))
        m = rng.integers(0, 2, size=(d, d))
        np.fill_diagonal(m, 0)
        agrees = (acyclicity_penalty(m) <= 1e-9) == is_dag(m)
        assert agrees, m
        checked += 1
        dags += int(is_dag(m))
    _verdict(
        3,
        True,
        f"penalty <= 1e-9 iff peeling accepts on all {checked} matrices "
        f"({dags} acyclic, {checked - dags} cyclic)",
    )


def test_criterion_4_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    worst = 0.0

    def check(params, build):
        nonlocal worst
        def scalar_for(trial):
            tape = Tape()
            nodes = {k: tape.param(k, v) for k, v in trial.items()}
            return tape, build(tape, nodes)

        tape, loss = scalar_for(params)
        grads = tape.backward(loss)
        for name, value in params.items():
            def scalar(v, name=name):
                trial = dict(params)
                trial[name] = v
                return float(scalar_for(trial)[1].value[0, 0])

            numeric = central_diff(scalar, np.array(value, dtype=np.float64))
            err = relative_error(grads[name], numeric)
            worst = max(worst, err)
            assert err < 1e-4, (name, err)

    a, b = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    x = rng.normal(size=(3, 3))
    bias = rng.normal(size=(1, 3))
    sq = lambda t, node: t.sum(t.square(node))
    check({"a": a, "b": b}, lambda t, n: sq(t, t.matmul(n["a"], n["b"])))
    check({"a": a, "b": b}, lambda t, n: sq(t, t.add(n["a"], n["b"])))
    check({"a": a, "b": b}, lambda t, n: sq(t, t.sub(n["a"], n["b"])))
    check({"a": a, "b": b}, lambda t, n: sq(t, t.mul(n["a"], n["b"])))
    check({"x": x, "b": bias}, lambda t, n: sq(t, t.add_bias(n["x"], n["b"])))
    check({"x": x}, lambda t, n: sq(t, t.scale(n["x"], 1.7)))
    check({"x": x}, lambda t, n: sq(t, t.mul_const(n["x"], a)))
    check({"x": x}, lambda t, n: sq(t, t.tanh(n["x"])))
    check({"x": x}, lambda t, n: sq(t, t.sigmoid(n["x"])))
    check({"x": x}, lambda t, n: sq(t, t.relu(n["x"])))
    check({"x": x}, lambda t, n: sq(t, t.softplus(n["x"])))
    check({"x": x}, lambda t, n: t.sum(t.square(n["x"])))
    check({"x": x, "y": b}, lambda t, n: sq(t, t.matmul(t.transpose(n["x"]), n["y"])))
    check({"x": x}, lambda t, n: sq(t, t.mean_rows(n["x"])))
    check({"x": x}, lambda t, n: sq(t, t.softmax_rows(n["x"])))
    check(
        {"x": x, "g": np.ones((1, 3)) + 0.1 * rng.normal(size=(1, 3)), "c": bias},
        lambda t, n: sq(t, t.layer_norm(n["x"], n["g"], n["c"])),
    )
    check(
        {"pa": rng.normal(size=(3, 4)), "pb": rng.normal(size=(3, 4)),
         "u": rng.normal(size=(4, 1))},
        lambda t, n: sq(t, t.pairwise_edge_scores(n["pa"], n["pb"], n["u"])),
    )

    cfg = PolicyConfig(d=3, batch_size=5, d_model=8, n_layers=1, n_heads=2)
    params = init_actor_params(cfg, rng)
    batch = rng.normal(size=(3, 5))
    edge_coeff = rng.normal(size=(3, 3)) * (1.0 - np.eye(3))
    total_coeff = rng.normal() * (1.0 - np.eye(3))
    check(
        params,
        lambda t, n: actor_loss_on_tape(
            t, cfg, n, batch, edge_coeff, total_coeff, n_graphs=4,
            entropy_weight=0.3,
        ),
    )
    _verdict(
        4,
        True,
        f"all tape operations and the composite actor loss match central "
        f"differences (worst relative error {worst:.2e} < 1e-4)",
    )


def test_criterion_5_entropy_estimator_accuracy():
    rng = np.random.default_rng(5)
    n = 10_000
    uniform_err = abs(spacing_entropy(rng.uniform(size=n)).value - 0.0)
    normal_err = abs(spacing_entropy(rng.normal(size=n)).value - 1.4189)
    fixed = rng.normal(size=500)
    base = spacing_entropy(fixed).value
    affine_err = 0.0
    for scale, shift in ((2.5, -7.0), (-3.0, 4.0), (0.1, 0.0)):
        got = spacing_entropy(scale * fixed + shift).value
        affine_err = max(affine_err, abs(got - (base + math.log(abs(scale)))))
    ok = uniform_err < 0.05 and normal_err < 0.05 and affine_err < 1e-9
    _verdict(
        5,
        ok,
        f"U(0,1) error {uniform_err:.3f} < 0.05, N(0,1) error "
        f"{normal_err:.3f} < 0.05, affine identity off by {affine_err:.1e}",
    )


def test_criterion_6_digamma_accuracy():
    gamma_err = abs(digamma(1.0) + 0.5772156649)
    worst = 0.0
    for x in (0.1, 0.5, 1.0, 1.5, 2.25, 5.0, 10.0, 123.5, 1e4, 1e6):
        worst = max(worst, abs((digamma(x + 1.0) - digamma(x)) - 1.0 / x))
    ok = gamma_err < 1e-10 and worst < 1e-10
    _verdict(
        6,
        ok,
        f"|psi(1) + 0.5772156649| = {gamma_err:.1e} < 1e-10, recurrence "
        f"residual {worst:.1e} < 1e-10",
    )


def test_criterion_7_bic_properties():
    model = random_model(GeneratorConfig(d=4, edge_probability=0.5, seed=9))
    ds = standardize(generate(model, 400, seed=10))
    scorer = BICScorer(ds)

    adj = np.zeros((4, 4), dtype=np.int64)
    adj[0, 2] = adj[1, 2] = adj[2, 3] = 1
    changed = adj.copy()
    changed[1, 2] = 0  # shrink node 2's parent set only
    locals_before = [
        scorer.local_score(j, tuple(np.flatnonzero(adj[:, j]))) for j in range(4)
    ]
    locals_after = [
        scorer.local_score(j, tuple(np.flatnonzero(changed[:, j]))) for j in range(4)
    ]
    touched = [j for j in range(4) if locals_before[j] != locals_after[j]]
    decomposable = touched == [2] and (
        scorer.score(changed) - scorer.score(adj)
        == pytest.approx(locals_after[2] - locals_before[2], rel=1e-12)
    )

    perm = np.array([2, 0, 3, 1])
    permuted = standardize(
        Dataset(samples=ds.samples[:, perm], variables=ds.variables.subset(perm))
    )
    scorer_p = BICScorer(permuted)
    inv_err = abs(
        scorer_p.score(adj[np.ix_(perm, perm)]) - scorer.score(adj)
    ) / abs(scorer.score(adj))

    cached = BICScorer(ds, cache=True)
    uncached = BICScorer(ds, cache=False)
    bit_equal = all(
        cached.score(g) == uncached.score(g) for g in all_dags(4)
    )
    ok = decomposable and inv_err < 1e-9 and bit_equal
    _verdict(
        7,
        ok,
        f"decomposability {'holds' if decomposable else 'fails'}, permutation "
        f"error {inv_err:.1e} < 1e-9, cache on/off bit-equal over all "
        f"543 4-node DAGs: {bit_equal}",
    )


def test_criterion_8_identical_runs_give_identical_graph_json(tmp_path):
    model = random_model(GeneratorConfig(d=4, edge_probability=0.5, seed=11))
    ds = generate(model, 300, seed=12)
    csv_path = tmp_path / "data.csv"
    rows = [",".join(ds.variables.names)]
    rows += [",".join(repr(v) for v in row) for row in ds.samples]
    csv_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    cfg = PipelineConfig(
        data_path=str(csv_path),
        target="X4",
        out_dir=str(tmp_path / "out"),
        iterations=150,
        graphs_per_iter=8,
        batch_size=32,
        d_model=16,
        n_layers=1,
        n_heads=2,
        seed=3,
    )
    run(cfg)
    first = (tmp_path / "out" / "graph.json").read_bytes()
    run(cfg)
    second = (tmp_path / "out" / "graph.json").read_bytes()
    _verdict(
        8,
        first == second,
        f"two identical runs produced byte-identical graph.json "
        f"({len(first)} bytes)",
    )


def _dataco_csv() -> Path | None:
    override = os.environ.get("RLCAUSAL_DATACO_CSV")
    candidates = [override] if override else []
    candidates += [
        "/root/pkg/data/DataCoSupplyChainDataset.csv",
        "data/DataCoSupplyChainDataset.csv",
    ]
    for c in candidates:
        if c and Path(c).is_file():
            return Path(c)
    return None


def test_criterion_9_dataco_report_is_qualitative(tmp_path):
    csv = _dataco_csv()
    if csv is None:
        print(
            "SKIP criterion 9: DataCo CSV not supplied "
            "(set RLCAUSAL_DATACO_CSV to run this non-gating check)"
        )
        pytest.skip("DataCo CSV not supplied")
    cfg = PipelineConfig(
        data_path=str(csv),
        schema_path=str(dataco_schema_path()),
        target="Late_delivery_risk",
        out_dir=str(tmp_path / "dataco"),
        iterations=800,
        seed=0,
    )
    artifacts = run(cfg)
    report = (tmp_path / "dataco" / "report.md").read_text()
    section = report.split("## Direct causes", 1)[1].split("##", 1)[0]
    direct_nonempty = "- " in section

    names = artifacts.graph.variables.names
    adj = artifacts.graph.adjacency
    t = names.index("Late_delivery_risk")
    has_edge = (
        "Delivery Status" in names
        and adj[names.index("Delivery Status"), t] == 1
    )
    reachable = {names.index("Shipping Mode")} if "Shipping Mode" in names else set()
    frontier = list(reachable)
    while frontier:
        node = frontier.pop()
        for child in np.flatnonzero(adj[node]):
            if child not in reachable:
                reachable.add(int(child))
                frontier.append(int(child))
    has_path = t in reachable
    print(f"{'pass' if has_edge else 'warn'}: Delivery Status -> Late_delivery_risk")
    print(f"{'pass' if has_path else 'warn'}: Shipping Mode reaches Late_delivery_risk")
    _verdict(
        9,
        direct_nonempty,
        "pipeline completed on DataCo and the direct-cause section is non-empty",
    )
