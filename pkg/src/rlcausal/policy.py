"""Graph-sampling policy network and its actor-critic trainer.

A small attention encoder reads one data batch (each variable is a
sequence position carrying s sampled values), a pairwise decoder turns
the encodings into d x d edge logits, and adjacency matrices are drawn
entrywise Bernoulli(sigmoid(logit)) with the diagonal pinned to zero.
REINFORCE with a critic baseline pushes the policy toward graphs with
high reward (low penalized BIC), while the best acyclic graph ever
sampled is tracked as the answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .autodiff import AdamState, Node, Tape, adam_step
from .data import Dataset, sample_batch
from .graphs import CausalGraph, as_adjacency, is_dag
from .scoring import BICScorer, RewardConfig, annealed_lambdas


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient goes non-finite; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class PolicyConfig:
    """Architecture of the encoder, decoder, and critic.

    ``batch_size`` is the number of data rows fed per variable; it fixes
    the input-projection width. Positional encoding gives each variable
    a learned identity; without one the edge logits depend only on data
    statistics, whose gradients are so strongly aligned across edges
    that the sampler can shift all logits together but can barely move
    one relative to another. Turning it off restores exact equivariance
    to variable relabeling at that price.
    """

    d: int
    batch_size: int = 64
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int | None = None
    decoder_hidden: int | None = None
    critic_hidden: int = 64
    positional_encoding: bool = True

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("policy needs at least 2 variables")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.d_model < 1 or self.n_layers < 1 or self.n_heads < 1:
            raise ValueError("d_model, n_layers, n_heads must be positive")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )
        if self.critic_hidden < 1:
            raise ValueError("critic_hidden must be positive")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def ffn_dim(self) -> int:
        return self.d_ff if self.d_ff is not None else 4 * self.d_model

    @property
    def dec_dim(self) -> int:
        return self.decoder_hidden if self.decoder_hidden is not None else self.d_model


@dataclass(frozen=True)
class TrainerConfig:
    """Loop hyperparameters: how long, how many graphs, how fast."""

    iterations: int = 2000
    graphs_per_iter: int = 32
    batch_size: int = 64
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    entropy_weight: float = 0.0
    warmup_iterations: int = 100
    reward: RewardConfig = RewardConfig()
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.graphs_per_iter < 1 or self.batch_size < 1:
            raise ValueError("iterations, graphs_per_iter, batch_size must be >= 1")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.entropy_weight < 0:
            raise ValueError("entropy_weight must be non-negative")
        if self.warmup_iterations < 0:
            raise ValueError("warmup_iterations must be non-negative")


# -- parameter initialization ------------------------------------------------


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.normal(0.0, 1.0 / math.sqrt(rows), size=(rows, cols))


def init_actor_params(cfg: PolicyConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fresh encoder + decoder weights keyed by layer/head name."""
    p: dict[str, np.ndarray] = {}
    p["in_w"] = _glorot(rng, cfg.batch_size, cfg.d_model)
    p["in_b"] = np.zeros((1, cfg.d_model))
    if cfg.positional_encoding:
        # Learned position identities, one row per variable. Random init
        # keeps the rows near-orthogonal; sinusoid tables are useless
        # here because for a handful of positions the low-frequency
        # dimensions make every row almost parallel, and without
        # distinct identities the decoder cannot move one edge's logit
        # without moving them all.
        p["pos_emb"] = rng.normal(0.0, 1.0, size=(cfg.d, cfg.d_model))
    dk = cfg.head_dim
    for layer in range(cfg.n_layers):
        for head in range(cfg.n_heads):
            tag = f"l{layer}_h{head}"
            p[f"{tag}_wq"] = _glorot(rng, cfg.d_model, dk)
            p[f"{tag}_wk"] = _glorot(rng, cfg.d_model, dk)
            p[f"{tag}_wv"] = _glorot(rng, cfg.d_model, dk)
            p[f"{tag}_wo"] = _glorot(rng, dk, cfg.d_model)
        p[f"l{layer}_ln1_g"] = np.ones((1, cfg.d_model))
        p[f"l{layer}_ln1_b"] = np.zeros((1, cfg.d_model))
        p[f"l{layer}_ffn_w1"] = _glorot(rng, cfg.d_model, cfg.ffn_dim)
        p[f"l{layer}_ffn_b1"] = np.zeros((1, cfg.ffn_dim))
        p[f"l{layer}_ffn_w2"] = _glorot(rng, cfg.ffn_dim, cfg.d_model)
        p[f"l{layer}_ffn_b2"] = np.zeros((1, cfg.d_model))
        p[f"l{layer}_ln2_g"] = np.ones((1, cfg.d_model))
        p[f"l{layer}_ln2_b"] = np.zeros((1, cfg.d_model))
    p["dec_w1"] = _glorot(rng, cfg.d_model, cfg.dec_dim)
    p["dec_w2"] = _glorot(rng, cfg.d_model, cfg.dec_dim)
    p["dec_u"] = _glorot(rng, cfg.dec_dim, 1)
    # Shared edge-density offset added to all sampling logits. Penalty
    # phases push every logit the same way; without a dedicated scalar
    # for that common mode the encoder collapses its tokens to move all
    # logits together, destroying per-edge information.
    #
    # Start sparse: at probability 0.5 a d-node sample has ~d(d-1)/2
    # edges and is cyclic almost surely once d exceeds 4 or so. A batch
    # with no acyclic member gives the cyclicity indicator zero contrast
    # after reward standardization, so the sampler can never learn to
    # cross into the DAG region. An offset of logit(1/(2(d-1))) puts the
    # initial expected edge count at d/2, where batches mix acyclic and
    # cyclic graphs and the indicator carries signal.
    p0 = 0.5 if cfg.d < 2 else 1.0 / (2.0 * (cfg.d - 1))
    p["dec_b"] = np.full((1, 1), math.log(p0 / (1.0 - p0)))
    return p


def init_critic_params(cfg: PolicyConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fresh two-layer value-head weights."""
    return {
        "cr_w1": _glorot(rng, cfg.d_model, cfg.critic_hidden),
        "cr_b1": np.zeros((1, cfg.critic_hidden)),
        "cr_w2": _glorot(rng, cfg.critic_hidden, 1),
        "cr_b2": np.zeros((1, 1)),
    }


# -- tape-level forward passes ------------------------------------------------


def _as_nodes(tape: Tape, params: dict[str, np.ndarray]) -> dict[str, Node]:
    return {name: tape.param(name, value) for name, value in params.items()}


def _encode_on_tape(
    tape: Tape, cfg: PolicyConfig, p: dict[str, Node], batch: np.ndarray
) -> Node:
    if batch.shape != (cfg.d, cfg.batch_size):
        raise ValueError(
            f"batch must be {cfg.d}x{cfg.batch_size}, got {batch.shape}"
        )
    x = tape.constant(batch)
    h = tape.add_bias(tape.matmul(x, p["in_w"]), p["in_b"])
    if cfg.positional_encoding:
        h = tape.add(h, p["pos_emb"])
    inv_sqrt_dk = 1.0 / math.sqrt(cfg.head_dim)
    for layer in range(cfg.n_layers):
        attn: Node | None = None
        for head in range(cfg.n_heads):
            tag = f"l{layer}_h{head}"
            q = tape.matmul(h, p[f"{tag}_wq"])
            k = tape.matmul(h, p[f"{tag}_wk"])
            v = tape.matmul(h, p[f"{tag}_wv"])
            weights = tape.softmax_rows(tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_dk))
            head_out = tape.matmul(tape.matmul(weights, v), p[f"{tag}_wo"])
            attn = head_out if attn is None else tape.add(attn, head_out)
        assert attn is not None
        h = tape.layer_norm(tape.add(h, attn), p[f"l{layer}_ln1_g"], p[f"l{layer}_ln1_b"])
        f = tape.relu(tape.add_bias(tape.matmul(h, p[f"l{layer}_ffn_w1"]), p[f"l{layer}_ffn_b1"]))
        f = tape.add_bias(tape.matmul(f, p[f"l{layer}_ffn_w2"]), p[f"l{layer}_ffn_b2"])
        h = tape.layer_norm(tape.add(h, f), p[f"l{layer}_ln2_g"], p[f"l{layer}_ln2_b"])
    return h


def _decode_on_tape(tape: Tape, p: dict[str, Node], enc: Node) -> Node:
    a = tape.matmul(enc, p["dec_w1"])
    b = tape.matmul(enc, p["dec_w2"])
    return tape.pairwise_edge_scores(a, b, p["dec_u"])


def _sampling_logits_on_tape(tape: Tape, p: dict[str, Node], enc: Node, d: int) -> Node:
    """Decoder logits plus the shared edge-density offset dec_b."""
    raw = _decode_on_tape(tape, p, enc)
    ones_col = tape.constant(np.ones((d, 1)))
    ones_row = tape.constant(np.ones((1, d)))
    shift = tape.matmul(tape.matmul(ones_col, p["dec_b"]), ones_row)
    return tape.add(raw, shift)


def _critic_on_tape(tape: Tape, p: dict[str, Node], pooled: np.ndarray) -> Node:
    x = tape.constant(pooled)
    hidden = tape.tanh(tape.add_bias(tape.matmul(x, p["cr_w1"]), p["cr_b1"]))
    return tape.add_bias(tape.matmul(hidden, p["cr_w2"]), p["cr_b2"])


# -- public inference --------------------------------------------------------


def encode(cfg: PolicyConfig, params: dict[str, np.ndarray], batch: np.ndarray) -> np.ndarray:
    """Encoder output, one d_model row per variable."""
    tape = Tape()
    return _encode_on_tape(tape, cfg, _as_nodes(tape, params), np.asarray(batch, dtype=np.float64)).value


def decode_logits(params: dict[str, np.ndarray], enc: np.ndarray) -> np.ndarray:
    """Edge logits for every ordered pair; the diagonal is -inf (no self-loops)."""
    tape = Tape()
    p = _as_nodes(tape, {k: params[k] for k in ("dec_w1", "dec_w2", "dec_u")})
    raw = _decode_on_tape(tape, p, tape.constant(np.asarray(enc, dtype=np.float64))).value
    logits = raw.copy()
    np.fill_diagonal(logits, -np.inf)
    return logits


def edge_probabilities(logits: np.ndarray) -> np.ndarray:
    """Sigmoid of the logits; -inf diagonal maps to probability 0."""
    return expit(logits)


def sample_adjacency(
    logits: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Draw one adjacency matrix and return it with its log-probability.

    Off-diagonal entries are independent Bernoulli(sigmoid(logit)).
    The log-probability sums log(sigma(g)) over realized edges and
    log(1 - sigma(g)) over realized non-edges, in the stable softplus
    form, skipping the diagonal.
    """
    logits = np.asarray(logits, dtype=np.float64)
    d = logits.shape[0]
    if logits.shape != (d, d):
        raise ValueError(f"logits must be square, got {logits.shape}")
    off = ~np.eye(d, dtype=bool)
    probs = expit(logits)
    draw = (rng.random((d, d)) < probs) & off
    adj = draw.astype(np.int64)
    g = np.where(off, logits, 0.0)
    log_prob = float(np.sum((adj * g - np.logaddexp(0.0, g))[off]))
    return adj, log_prob


def critic_value(
    cfg: PolicyConfig, params: dict[str, np.ndarray], enc: np.ndarray
) -> float:
    """Predicted reward baseline from mean-pooled encoder output."""
    pooled = np.asarray(enc, dtype=np.float64).mean(axis=0, keepdims=True)
    tape = Tape()
    return float(_critic_on_tape(tape, _as_nodes(tape, params), pooled).value[0, 0])


def actor_loss_on_tape(
    tape: Tape,
    cfg: PolicyConfig,
    p: dict[str, Node],
    batch: np.ndarray,
    edge_coeff: np.ndarray,
    total_coeff: np.ndarray,
    n_graphs: int,
    entropy_weight: float = 0.0,
) -> Node:
    """Surrogate REINFORCE loss as a tape node.

    For advantages a_b and sampled matrices M_b, the surrogate is

        L = (1/B) [ sum(softplus(g) * total_coeff) - sum(g * edge_coeff) ]
            - entropy_weight * sum(H(sigmoid(g)))

    with edge_coeff = sum_b a_b M_b and total_coeff = (sum_b a_b) on
    off-diagonal entries, zero on the diagonal. The first term's
    gradient equals -(1/B) sum_b a_b grad log pi(M_b | g). The entropy
    bonus H(p) = softplus(g) - g*sigmoid(g) per off-diagonal entry
    keeps the sampler stochastic: a batch of identical graphs has zero
    advantage variance, so without it a deterministic policy is an
    absorbing state the gradient can never leave.
    """
    enc = _encode_on_tape(tape, cfg, p, batch)
    if "dec_b" in p:
        g = _sampling_logits_on_tape(tape, p, enc, cfg.d)
    else:
        g = _decode_on_tape(tape, p, enc)
    penalty = tape.sum(tape.mul_const(tape.softplus(g), total_coeff))
    gain = tape.sum(tape.mul_const(g, edge_coeff))
    loss = tape.scale(tape.sub(penalty, gain), 1.0 / n_graphs)
    if entropy_weight > 0.0:
        mask = 1.0 - np.eye(cfg.d)
        ent = tape.sub(tape.softplus(g), tape.mul(g, tape.sigmoid(g)))
        ent_sum = tape.sum(tape.mul_const(ent, mask))
        loss = tape.sub(loss, tape.scale(ent_sum, entropy_weight))
    return loss


# -- training ----------------------------------------------------------------


@dataclass
class TrainState:
    """Running record of the search; ``best_graph`` is always acyclic."""

    iteration: int = 0
    best_reward: float = -math.inf
    best_bic: float = math.inf
    best_graph: np.ndarray | None = None
    best_cyclic_bic: float = math.inf
    best_cyclic_graph: np.ndarray | None = None
    last_edge_probs: np.ndarray | None = None
    repaired: bool = False
    logs: list[dict] = field(default_factory=list)


class PolicyTrainer:
    """Owns the parameters, optimizers, and RNG streams for one run."""

    def __init__(
        self,
        cfg: TrainerConfig,
        ds: Dataset,
        scorer: BICScorer,
        policy: PolicyConfig | None = None,
    ):
        if ds.d < 2:
            raise ValueError("training needs at least 2 variables")
        if cfg.batch_size > ds.m:
            raise ValueError(
                f"batch_size {cfg.batch_size} exceeds dataset rows {ds.m}"
            )
        if scorer.d != ds.d:
            raise ValueError("scorer and dataset disagree on variable count")
        self.cfg = cfg
        self.ds = ds
        self.scorer = scorer
        self.policy = policy or PolicyConfig(d=ds.d, batch_size=cfg.batch_size)
        if self.policy.d != ds.d or self.policy.batch_size != cfg.batch_size:
            raise ValueError("policy config disagrees with dataset/trainer shapes")
        init_seed, batch_seed, edge_seed = np.random.SeedSequence(cfg.seed).spawn(3)
        init_rng = np.random.default_rng(init_seed)
        self.batch_rng = np.random.default_rng(batch_seed)
        self.edge_rng = np.random.default_rng(edge_seed)
        self.actor_params = init_actor_params(self.policy, init_rng)
        self.critic_params = init_critic_params(self.policy, init_rng)
        self.actor_opt = AdamState(lr=cfg.actor_lr, eps=1e-5)
        self.critic_opt = AdamState(lr=cfg.critic_lr, eps=1e-5)
        self.lambda1_cap = (
            cfg.reward.schedule.lambda1_cap
            if cfg.reward.schedule.lambda1_cap is not None
            else 10.0 * scorer.bic_range_estimate()
        )
        self.state = TrainState()
        self._off_mask = (~np.eye(ds.d, dtype=bool)).astype(np.float64)

    def step(self) -> dict:
        """One policy-gradient iteration; returns the log record."""
        cfg, state = self.cfg, self.state
        lam1, lam2 = annealed_lambdas(cfg.reward, state.iteration, self.lambda1_cap)
        batch = sample_batch(self.ds, cfg.batch_size, self.batch_rng)

        tape = Tape()
        nodes = _as_nodes(tape, self.actor_params)
        enc_node = _encode_on_tape(tape, self.policy, nodes, batch)
        logits_node = _sampling_logits_on_tape(tape, nodes, enc_node, self.ds.d)
        raw_logits = logits_node.value
        masked = raw_logits.copy()
        np.fill_diagonal(masked, -np.inf)
        probs = expit(masked)

        matrices = []
        rewards = np.empty(cfg.graphs_per_iter)
        h_values = np.empty(cfg.graphs_per_iter)
        cyclic = 0
        for b in range(cfg.graphs_per_iter):
            adj, _ = sample_adjacency(masked, self.edge_rng)
            breakdown = self.scorer.reward(adj, lam1, lam2)
            matrices.append(adj)
            rewards[b] = breakdown.total
            h_values[b] = breakdown.h
            if breakdown.is_acyclic:
                if breakdown.total > state.best_reward:
                    state.best_reward = breakdown.total
                    state.best_bic = breakdown.bic
                    state.best_graph = adj.copy()
            else:
                cyclic += 1
                if breakdown.bic < state.best_cyclic_bic:
                    state.best_cyclic_bic = breakdown.bic
                    state.best_cyclic_graph = adj.copy()

        standardized = (rewards - rewards.mean()) / (rewards.std() + 1e-8)
        baseline = critic_value(self.policy, self.critic_params, enc_node.value)
        advantages = standardized - baseline

        edge_coeff = np.zeros((self.ds.d, self.ds.d))
        for adv, adj in zip(advantages, matrices):
            edge_coeff += adv * adj
        total_coeff = float(advantages.sum()) * self._off_mask
        penalty = tape.sum(tape.mul_const(tape.softplus(logits_node), total_coeff))
        gain = tape.sum(tape.mul_const(logits_node, edge_coeff))
        loss = tape.scale(tape.sub(penalty, gain), 1.0 / cfg.graphs_per_iter)
        if cfg.entropy_weight > 0.0:
            ent = tape.sub(
                tape.softplus(logits_node),
                tape.mul(logits_node, tape.sigmoid(logits_node)),
            )
            ent_sum = tape.sum(tape.mul_const(ent, self._off_mask))
            loss = tape.sub(loss, tape.scale(ent_sum, cfg.entropy_weight))

        self._check_finite(loss.value, raw_logits, rewards, lam1, lam2)
        grads = tape.backward(loss)
        self._check_grads(grads, raw_logits, rewards, lam1, lam2)
        # Until v has gradient history, bias-corrected Adam steps every
        # parameter by the full lr regardless of gradient size; thousands
        # of coherent +-lr steps swing the logits by whole units. Ramp
        # the lr so early steps stay small while v fills in.
        ramp = min(1.0, (state.iteration + 1) / max(1, cfg.warmup_iterations))
        self.actor_opt.lr = cfg.actor_lr * ramp
        self.critic_opt.lr = cfg.critic_lr * ramp
        self.actor_params = adam_step(self.actor_opt, self.actor_params, grads)

        ctape = Tape()
        cnodes = _as_nodes(ctape, self.critic_params)
        pooled = enc_node.value.mean(axis=0, keepdims=True)
        value_node = _critic_on_tape(ctape, cnodes, pooled)
        # MSE to the standardized rewards up to a constant: the gradient
        # of (v - mean(t))^2 matches mean((v - t_b)^2) exactly.
        target_mean = float(standardized.mean())
        closs = ctape.add(
            ctape.square(value_node), ctape.scale(value_node, -2.0 * target_mean)
        )
        cgrads = ctape.backward(ctape.sum(closs))
        self.critic_params = adam_step(self.critic_opt, self.critic_params, cgrads)
        critic_mse = float(np.mean((baseline - standardized) ** 2))

        state.last_edge_probs = probs
        # best_reward is -inf until the first acyclic sample; JSON has no inf.
        best = state.best_reward
        record = {
            "iteration": state.iteration,
            "reward_mean": float(rewards.mean()),
            "reward_best": float(best) if math.isfinite(best) else None,
            "h_mean": float(h_values.mean()),
            "cyclic_fraction": cyclic / cfg.graphs_per_iter,
            "critic_loss": critic_mse,
            "lambda1": lam1,
            "lambda2": lam2,
        }
        state.logs.append(record)
        state.iteration += 1
        return record

    def _check_finite(self, loss_value, logits, rewards, lam1, lam2):
        if np.all(np.isfinite(loss_value)):
            return
        raise TrainingDiverged(
            "actor loss is non-finite",
            self._diagnostics(logits, rewards, lam1, lam2),
        )

    def _check_grads(self, grads, logits, rewards, lam1, lam2):
        for name, grad in grads.items():
            if not np.all(np.isfinite(grad)):
                diag = self._diagnostics(logits, rewards, lam1, lam2)
                diag["param"] = name
                raise TrainingDiverged(f"gradient for {name} is non-finite", diag)

    def _diagnostics(self, logits, rewards, lam1, lam2) -> dict:
        finite = logits[np.isfinite(logits)]
        return {
            "iteration": self.state.iteration,
            "logit_min": float(finite.min()) if finite.size else math.nan,
            "logit_max": float(finite.max()) if finite.size else math.nan,
            "reward_min": float(rewards.min()),
            "reward_max": float(rewards.max()),
            "lambda1": lam1,
            "lambda2": lam2,
        }

    def run(self, on_record=None) -> tuple[CausalGraph, TrainState]:
        """Full training loop; returns the best acyclic graph found.

        If every sampled graph was cyclic, the best cyclic graph is
        repaired by greedily deleting its lowest-probability edges until
        acyclic, and the state is flagged.
        """
        for _ in range(self.cfg.iterations):
            record = self.step()
            if on_record is not None:
                on_record(record)
        state = self.state
        if state.best_graph is not None:
            final = state.best_graph
        else:
            final = self._repair(state.best_cyclic_graph, state.last_edge_probs)
            state.repaired = True
            state.best_graph = final
            state.best_bic = self.scorer.score(final)
            state.best_reward = -state.best_bic
        graph = CausalGraph(adjacency=as_adjacency(final), variables=self.ds.variables)
        return graph, state

    def _repair(self, adj: np.ndarray | None, probs: np.ndarray | None) -> np.ndarray:
        if adj is None:
            raise RuntimeError("no graphs were sampled; cannot repair")
        assert probs is not None
        adj = adj.copy()
        while not is_dag(adj):
            rows, cols = np.nonzero(adj)
            weakest = np.argmin(probs[rows, cols])
            adj[rows[weakest], cols[weakest]] = 0
        return adj


def train(
    cfg: TrainerConfig,
    ds: Dataset,
    scorer: BICScorer,
    policy: PolicyConfig | None = None,
    on_record=None,
) -> tuple[CausalGraph, TrainState]:
    """Convenience wrapper: build a trainer and run it to completion."""
    return PolicyTrainer(cfg, ds, scorer, policy).run(on_record)
