"""Self-attention actor-critic with optional knowledge-graph guidance.

The policy encodes the goal and current selection into a query, dot-products
it against keys of the table entities (scaled by 1/sqrt(key_dim)), and uses
those attention scores as action logits. The value head is a two-layer
perceptron over the attention-weighted sum of linearly transformed table
features. When a link-prediction model is attached, two relation score
vectors are computed per step (table entity combinesWith the selection,
table entity componentOf the goal) and mixed component-wise into the final
policy logits by three learned coefficients, themselves predicted from the
attention-weighted table encoding.

Training is synchronous n-step advantage actor-critic over a BatchRunner:
rollouts of `unroll` steps across `num_envs` environments, bootstrapped
returns, policy-gradient loss plus 0.5 * value MSE minus an entropy bonus,
optimized with RMSProp. Serial execution makes runs bit-reproducible.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import linkpred
from .errors import ConfigError, ContractError
from .embed import EmbeddingTable
from .env import EnvState, RewardConfig, default_max_steps, reset, sample_task, step
from .recipes import EMPTY, RecipeBook, RecipeSplit
from .seeding import mix_seeds
from .vecenv import BatchRunner

KG_MODES = ("none", "full", "partial", "combinesWith-only", "componentOf-only")

_MASK_OFF = -1e9


@dataclass(frozen=True)
class AgentDims:
    feat_dim: int
    key_dim: int = 300
    value_dim: int = 300
    hidden_dim: int = 300


class AgentNet:
    """Parameter container; all math lives in forward_batch."""

    def __init__(self, dims: AgentDims, seed: int = 0, mix_activation: str = "linear"):
        if mix_activation not in ("linear", "softplus"):
            raise ConfigError(f"unknown mix activation {mix_activation!r}")
        self.dims = dims
        self.mix_activation = mix_activation
        rng = np.random.Generator(np.random.PCG64(mix_seeds(seed, 0xA6E)))
        d, dk, dv, dh = dims.feat_dim, dims.key_dim, dims.value_dim, dims.hidden_dim

        def init(rows, cols, scale=None):
            s = scale if scale is not None else 1.0 / math.sqrt(rows)
            return ad.tensor(rng.standard_normal((rows, cols)) * s, requires_grad=True)

        self.params = {
            "query_w": init(3 * d, dk),
            "key_w": init(d, dk),
            "value_w": init(d, dv),
            "value_hidden_w": init(dv, dh),
            "value_hidden_b": ad.tensor(np.zeros((1, dh)), requires_grad=True),
            "value_out_w": init(dh, 1),
            "value_out_b": ad.tensor(np.zeros((1, 1)), requires_grad=True),
            "mix_w": init(d, dv),
            "mix_out_w": init(dv, 3, scale=0.1 / math.sqrt(dv)),
            # Identity mixing at init: attention passes through at weight 1,
            # relation scores fade in as their coefficients are learned.
            "mix_out_b": ad.tensor(np.array([[1.0, 0.0, 0.0]]), requires_grad=True),
        }
        self._frozen = None

    def param_tensors(self, train: bool) -> dict[str, ad.Tensor]:
        if train:
            return self.params
        if self._frozen is None:
            # Constant views share the underlying arrays, so in-place
            # optimizer updates stay visible without re-wrapping.
            self._frozen = {k: ad.Tensor(t.data) for k, t in self.params.items()}
        return self._frozen

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            if arrays[k].shape != t.data.shape:
                raise ContractError(f"checkpoint shape mismatch for {k}")
            t.data[...] = arrays[k]


def save_agent(path: str, net: AgentNet) -> None:
    ad.save_checkpoint(path, net.arrays(), meta={
        "kind": "agent",
        "feat_dim": net.dims.feat_dim,
        "key_dim": net.dims.key_dim,
        "value_dim": net.dims.value_dim,
        "hidden_dim": net.dims.hidden_dim,
        "mix_activation": net.mix_activation,
    })


def load_agent(path: str) -> AgentNet:
    arrays, meta = ad.load_checkpoint(path)
    if meta.get("kind") != "agent":
        raise ContractError(f"{path} is not an agent checkpoint")
    dims = AgentDims(meta["feat_dim"], meta["key_dim"], meta["value_dim"], meta["hidden_dim"])
    net = AgentNet(dims, seed=0, mix_activation=meta.get("mix_activation", "linear"))
    net.load_arrays(arrays)
    return net


@dataclass(frozen=True)
class PolicyOutput:
    attention: np.ndarray      # pre-softmax attention scores per slot
    logits: np.ndarray         # final mixed policy logits per slot
    probs: np.ndarray
    value: float
    mix: np.ndarray            # (attention, combinesWith, componentOf) weights


def kg_score_pair(kg_model: linkpred.LinkModel | None, kg_mode: str,
                  table_ids: np.ndarray, goal_ids: np.ndarray,
                  selected_ids: np.ndarray):
    """Relation score matrices (u, v) for a batch, honoring ablation modes."""
    if kg_mode not in KG_MODES:
        raise ConfigError(f"unknown kg_mode {kg_mode!r}")
    if kg_mode == "none" or kg_model is None:
        return None
    shape = table_ids.shape
    if kg_mode == "componentOf-only":
        u = np.zeros(shape)
    else:
        u = linkpred.relation_score_matrix(kg_model, table_ids, linkpred.COMBINES_WITH, selected_ids)
    if kg_mode == "combinesWith-only":
        v = np.zeros(shape)
    else:
        v = linkpred.relation_score_matrix(kg_model, table_ids, linkpred.COMPONENT_OF, goal_ids)
    return u, v


def forward_batch(params: dict[str, ad.Tensor], dims: AgentDims, emb: EmbeddingTable,
                  goal_ids: np.ndarray, selected_ids: np.ndarray,
                  table_ids: np.ndarray, mask: np.ndarray,
                  kg_scores=None, mix_activation: str = "linear") -> dict:
    """Differentiable forward pass over a padded batch.

    table_ids is (B, K) with -1 padding; mask is 1.0 on live slots. Returns
    tensors keyed attention, logits, log_probs, probs, value, mix, entropy.
    """
    B, K = table_ids.shape
    mask_bias = ad.constant((mask - 1.0) * -_MASK_OFF)  # 0 on live slots, -1e9 on pads

    goal_x = ad.constant(emb.vectors[goal_ids])
    sel_x = ad.constant(emb.vectors[selected_ids])
    # Second selection slot: the environment resolves it as the action itself,
    # so the network always sees the empty placeholder here.
    empty_x = ad.constant(np.zeros_like(goal_x.data))
    query_in = ad.concat([goal_x, sel_x, empty_x], axis=1)
    query = ad.matmul(query_in, params["query_w"])                    # (B, dk)

    table_x = ad.constant(emb.vectors[table_ids])                     # (B, K, d)
    keys = ad.matmul(table_x, params["key_w"])                        # (B, K, dk)
    attention = ad.scale(
        ad.tsum(ad.mul(ad.reshape(query, (B, 1, dims.key_dim)), keys), axis=2),
        1.0 / math.sqrt(dims.key_dim),
    )                                                                 # (B, K)
    attn_weights = ad.row_softmax(ad.add(attention, mask_bias))       # (B, K)
    attn_w3 = ad.reshape(attn_weights, (B, K, 1))

    values3 = ad.matmul(table_x, params["value_w"])                   # (B, K, dv)
    encoding = ad.tsum(ad.mul(attn_w3, values3), axis=1)              # (B, dv)
    hidden = ad.tanh(ad.add(ad.matmul(encoding, params["value_hidden_w"]),
                            params["value_hidden_b"]))
    value = ad.add(ad.matmul(hidden, params["value_out_w"]), params["value_out_b"])

    mix3 = ad.matmul(table_x, params["mix_w"])                        # (B, K, dv)
    mix_enc = ad.tsum(ad.mul(attn_w3, mix3), axis=1)                  # (B, dv)
    mix = ad.add(ad.matmul(mix_enc, params["mix_out_w"]), params["mix_out_b"])
    if mix_activation == "softplus":
        mix = ad.softplus(mix)

    mix_attn = ad.narrow(mix, 1, 0, 1)                                # (B, 1)
    logits = ad.mul(mix_attn, attention)
    if kg_scores is not None:
        u, v = kg_scores
        logits = ad.add(logits, ad.mul(ad.narrow(mix, 1, 1, 1), ad.constant(u)))
        logits = ad.add(logits, ad.mul(ad.narrow(mix, 1, 2, 1), ad.constant(v)))

    masked_logits = ad.add(logits, mask_bias)
    log_probs = ad.sub(masked_logits, ad.logsumexp(masked_logits, axis=1, keepdims=True))
    probs = ad.row_softmax(masked_logits)
    entropy = ad.scale(ad.tsum(ad.mul(probs, log_probs), axis=1), -1.0)

    return {
        "attention": attention,
        "logits": logits,
        "masked_logits": masked_logits,
        "log_probs": log_probs,
        "probs": probs,
        "value": value,
        "mix": mix,
        "entropy": entropy,
    }


def _state_batch(states: list[EnvState]):
    B = len(states)
    K = max(len(s.table) for s in states)
    table_ids = np.full((B, K), EMPTY, dtype=np.int64)
    mask = np.zeros((B, K), dtype=np.float64)
    goal_ids = np.empty(B, dtype=np.int64)
    selected_ids = np.empty(B, dtype=np.int64)
    for i, s in enumerate(states):
        k = len(s.table)
        table_ids[i, :k] = s.table
        mask[i, :k] = 1.0
        goal_ids[i] = s.goal
        selected_ids[i] = s.selected
    return goal_ids, selected_ids, table_ids, mask


def forward(net: AgentNet, state: EnvState, emb: EmbeddingTable,
            kg_model: linkpred.LinkModel | None = None,
            kg_mode: str = "none") -> PolicyOutput:
    """Single-state policy evaluation (no gradients recorded)."""
    if state.done:
        raise ContractError("forward: episode already finished")
    if not state.table:
        raise ContractError("forward: empty table")
    goal_ids, selected_ids, table_ids, mask = _state_batch([state])
    kg_scores = kg_score_pair(kg_model, kg_mode, table_ids, goal_ids, selected_ids)
    out = forward_batch(net.param_tensors(train=False), net.dims, emb,
                        goal_ids, selected_ids, table_ids, mask,
                        kg_scores=kg_scores, mix_activation=net.mix_activation)
    k = len(state.table)
    return PolicyOutput(
        attention=out["attention"].data[0, :k].copy(),
        logits=out["logits"].data[0, :k].copy(),
        probs=out["probs"].data[0, :k].copy(),
        value=float(out["value"].data[0, 0]),
        mix=out["mix"].data[0].copy(),
    )


def act_greedy(net: AgentNet, state: EnvState, emb: EmbeddingTable,
               kg_model: linkpred.LinkModel | None = None,
               kg_mode: str = "none") -> int:
    """Argmax action; ties resolve to the lowest slot index."""
    return int(np.argmax(forward(net, state, emb, kg_model, kg_mode).probs))


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    lr: float = 1e-3
    num_envs: int = 128
    unroll: int = 2
    rmsprop_epsilon: float = 0.01
    rmsprop_decay: float = 0.99
    entropy_coef: float = 0.01
    total_steps: int = 3_000_000
    seed: int = 0
    kg_mode: str = "none"
    metrics_interval: int = 8192      # env steps between train metric records
    eval_interval: int = 0            # env steps between zero-shot evals (0 = off)
    eval_tasks: int = 200

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0,1], got {self.gamma}")
        if self.kg_mode not in KG_MODES:
            raise ConfigError(f"unknown kg_mode {self.kg_mode!r}")


def n_step_returns(rewards: np.ndarray, dones: np.ndarray,
                   bootstrap: np.ndarray, gamma: float) -> np.ndarray:
    """Discounted returns over an (L, B) rollout with terminal cut-offs."""
    L, B = rewards.shape
    out = np.empty((L, B), dtype=np.float64)
    running = bootstrap.astype(np.float64)
    for t in range(L - 1, -1, -1):
        running = rewards[t] + gamma * running * (1.0 - dones[t])
        out[t] = running
    return out


def zero_shot_eval(net: AgentNet, emb: EmbeddingTable, book: RecipeBook,
                   split: RecipeSplit, partition: str, depth: int,
                   num_distractors: int, num_tasks: int, seed: int,
                   kg_model=None, kg_mode: str = "none") -> float:
    """Greedy success rate over freshly sampled tasks (argmax actions)."""
    cfg = RewardConfig()
    max_steps = default_max_steps(depth)
    successes = 0
    for i in range(num_tasks):
        task = sample_task(book, split, partition, depth, num_distractors,
                           mix_seeds(seed, 0xE7A1, i))
        state = reset(task)
        while not state.done:
            action = act_greedy(net, state, emb, kg_model, kg_mode)
            state = step(state, action, book, cfg, max_steps).state
        successes += state.success
    return successes / num_tasks


def a2c_train(net: AgentNet, runner: BatchRunner, emb: EmbeddingTable,
              cfg: TrainConfig, kg_model: linkpred.LinkModel | None = None,
              metrics_path: str | None = None) -> list[dict]:
    """Train the net in place; returns the metrics stream (also written as
    JSON-lines when metrics_path is given)."""
    if cfg.kg_mode != "none" and kg_model is None:
        raise ConfigError(f"kg_mode {cfg.kg_mode!r} needs a link model")
    params = net.params
    opt = ad.RMSProp(params, lr=cfg.lr, epsilon=cfg.rmsprop_epsilon,
                     decay=cfg.rmsprop_decay)
    rng = np.random.Generator(np.random.PCG64(mix_seeds(cfg.seed, 0xAC7)))

    B = runner.num_envs
    metrics: list[dict] = []
    writer = open(metrics_path, "w") if metrics_path else None

    def emit(record: dict):
        metrics.append(record)
        if writer:
            writer.write(json.dumps(record) + "\n")
            writer.flush()

    episode_return = np.zeros(B)
    recent_returns: deque = deque(maxlen=512)
    recent_success: deque = deque(maxlen=512)
    steps_done = 0
    next_metrics = cfg.metrics_interval
    next_eval = cfg.eval_interval if cfg.eval_interval else None
    last = {"pg_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}

    try:
        while steps_done < cfg.total_steps:
            cache = []
            rewards = np.zeros((cfg.unroll, B))
            dones = np.zeros((cfg.unroll, B))
            for t in range(cfg.unroll):
                batch = _state_batch(runner.states)
                goal_ids, selected_ids, table_ids, mask = batch
                kg_scores = kg_score_pair(kg_model, cfg.kg_mode, table_ids,
                                          goal_ids, selected_ids)
                out = forward_batch(params, net.dims, emb, goal_ids, selected_ids,
                                    table_ids, mask, kg_scores=kg_scores,
                                    mix_activation=net.mix_activation)
                probs = out["probs"].data
                cdf = np.cumsum(probs, axis=1)
                draws = rng.random((B, 1))
                actions = (cdf < draws).sum(axis=1)
                limits = mask.sum(axis=1).astype(np.int64) - 1
                actions = np.minimum(actions, limits)

                outcomes = runner.batch_step(list(actions))
                for i, o in enumerate(outcomes):
                    rewards[t, i] = o.reward
                    episode_return[i] += o.reward
                    if o.state.done:
                        dones[t, i] = 1.0
                        recent_returns.append(episode_return[i])
                        recent_success.append(float(o.state.success))
                        episode_return[i] = 0.0
                cache.append((out, actions))
                steps_done += B

            boot_batch = _state_batch(runner.states)
            boot_kg = kg_score_pair(kg_model, cfg.kg_mode, boot_batch[2],
                                    boot_batch[0], boot_batch[1])
            boot = forward_batch(net.param_tensors(train=False), net.dims, emb,
                                 *boot_batch, kg_scores=boot_kg,
                                 mix_activation=net.mix_activation)
            targets = n_step_returns(rewards, dones, boot["value"].data[:, 0], cfg.gamma)

            pg_terms, value_terms, entropy_terms = [], [], []
            for t, (out, actions) in enumerate(cache):
                target_t = ad.constant(targets[t].reshape(-1, 1))
                advantage = targets[t] - out["value"].data[:, 0]
                logp = ad.take_per_row(out["log_probs"], actions)
                pg_terms.append(ad.tsum(ad.mul(logp, ad.constant(-advantage))))
                diff = ad.sub(out["value"], target_t)
                value_terms.append(ad.tsum(ad.mul(diff, diff)))
                entropy_terms.append(ad.tsum(out["entropy"]))

            count = float(B * cfg.unroll)
            pg_loss = ad.scale(_sum_tensors(pg_terms), 1.0 / count)
            value_loss = ad.scale(_sum_tensors(value_terms), 1.0 / count)
            entropy_mean = ad.scale(_sum_tensors(entropy_terms), 1.0 / count)
            loss = ad.add(
                ad.add(pg_loss, ad.scale(value_loss, 0.5)),
                ad.scale(entropy_mean, -cfg.entropy_coef),
            )
            if not np.isfinite(float(loss.data)):
                raise RuntimeError(
                    "non-finite training loss; last batch: "
                    f"targets={targets.tolist()}, rewards={rewards.tolist()}")
            ad.backward(loss)
            opt.step()
            opt.zero_grad()
            last = {
                "pg_loss": float(pg_loss.data),
                "value_loss": float(value_loss.data),
                "entropy": float(entropy_mean.data),
            }

            if steps_done >= next_metrics:
                next_metrics += cfg.metrics_interval
                emit({
                    "step": steps_done,
                    "split": "train",
                    "success_rate": (sum(recent_success) / len(recent_success)
                                     if recent_success else 0.0),
                    "return_mean": (sum(recent_returns) / len(recent_returns)
                                    if recent_returns else 0.0),
                    **last,
                })
            if next_eval is not None and steps_done >= next_eval:
                next_eval += cfg.eval_interval
                rate = zero_shot_eval(
                    net, emb, runner.book, runner.split, "test", runner.depth,
                    runner.num_distractors, cfg.eval_tasks,
                    mix_seeds(cfg.seed, steps_done), kg_model, cfg.kg_mode)
                emit({"step": steps_done, "split": "test", "success_rate": rate})
    finally:
        if writer:
            writer.close()
    return metrics


def _sum_tensors(terms):
    acc = terms[0]
    for t in terms[1:]:
        acc = ad.add(acc, t)
    return acc
