"""Evaluation harness: solvability oracle, baseline policies, reports.

The oracle is a breadth-first search over (table, selection) states and is
the correctness reference for the sampler and the environment. Policies are
small objects with begin_task/act hooks; evaluation runs each policy over a
deterministic stream of freshly sampled tasks and reports exact success
fractions plus per-task records.
"""

from __future__ import annotations

import csv
import json
import random
from collections import deque
from dataclasses import dataclass, asdict

import numpy as np

from . import agent as agent_mod
from . import linkpred
from .errors import ContractError
from .env import (
    EnvState, RewardConfig, TaskSpec, default_max_steps, reset, sample_task, step,
)
from .recipes import EMPTY, RecipeBook, RecipeSplit
from .seeding import mix_seeds


def oracle_solve(task: TaskSpec, book: RecipeBook,
                 max_steps: int | None = None) -> list[int] | None:
    """Shortest successful action sequence, or None when unsolvable in budget.

    BFS over reachable states; entities persist, so a state is fully described
    by the ordered table plus the current selection.
    """
    budget = default_max_steps(task.depth) if max_steps is None else max_steps
    cfg = RewardConfig()
    start = reset(task)
    queue: deque[tuple[EnvState, tuple[int, ...]]] = deque([(start, ())])
    seen = {(start.table, start.selected)}
    while queue:
        state, path = queue.popleft()
        if state.steps_taken >= budget:
            continue
        for slot in range(len(state.table)):
            out = step(state, slot, book, cfg, budget)
            nxt = out.state
            if nxt.success:
                return list(path + (slot,))
            if nxt.done:
                continue
            key = (nxt.table, nxt.selected)
            if key not in seen:
                seen.add(key)
                queue.append((nxt, path + (slot,)))
    return None


def random_policy_success_probability(task: TaskSpec, book: RecipeBook,
                                      max_steps: int | None = None) -> float:
    """Exact success probability of the uniform-random policy on one task.

    Weighted enumeration over the reachable state tree: each action carries
    probability 1/|table|. Memoized on (table, selection, steps).
    """
    budget = default_max_steps(task.depth) if max_steps is None else max_steps
    cfg = RewardConfig()
    memo: dict[tuple, float] = {}

    def visit(state: EnvState) -> float:
        if state.done:
            return 1.0 if state.success else 0.0
        key = (state.table, state.selected, state.steps_taken)
        hit = memo.get(key)
        if hit is not None:
            return hit
        k = len(state.table)
        p = sum(visit(step(state, slot, book, cfg, budget).state) for slot in range(k)) / k
        memo[key] = p
        return p

    return visit(reset(task))


# ---------------------------------------------------------------------------
# policies

class RandomPolicy:
    name = "random"

    def begin_task(self, task: TaskSpec, state: EnvState, rng: random.Random):
        pass

    def act(self, state: EnvState, rng: random.Random) -> int:
        return rng.randrange(len(state.table))


class OraclePolicy:
    name = "oracle"

    def __init__(self, book: RecipeBook, max_steps: int | None = None):
        self.book = book
        self.max_steps = max_steps
        self._plan: list[int] = []

    def begin_task(self, task: TaskSpec, state: EnvState, rng: random.Random):
        plan = oracle_solve(task, self.book, self.max_steps)
        self._plan = list(plan) if plan else []

    def act(self, state: EnvState, rng: random.Random) -> int:
        if self._plan:
            return self._plan.pop(0)
        return 0


class NetPolicy:
    def __init__(self, net, emb, kg_model=None, kg_mode: str = "none",
                 sample: bool = False):
        self.net = net
        self.emb = emb
        self.kg_model = kg_model
        self.kg_mode = kg_mode
        self.sample = sample
        self.name = f"net({kg_mode})"

    def begin_task(self, task: TaskSpec, state: EnvState, rng: random.Random):
        pass

    def act(self, state: EnvState, rng: random.Random) -> int:
        if not self.sample:
            return agent_mod.act_greedy(self.net, state, self.emb,
                                        self.kg_model, self.kg_mode)
        probs = agent_mod.forward(self.net, state, self.emb,
                                  self.kg_model, self.kg_mode).probs
        return int(np.searchsorted(np.cumsum(probs), rng.random()))


class KGGreedyPolicy:
    """Acts on relation scores alone, ignoring the attention pathway.

    subset picks which scores count: 'both', 'combinesWith', or 'componentOf'.
    """

    def __init__(self, model: linkpred.LinkModel, subset: str = "both"):
        if subset not in ("both", "combinesWith", "componentOf"):
            raise ContractError(f"unknown score subset {subset!r}")
        self.model = model
        self.subset = subset
        self.name = f"kg-greedy({subset})"

    def begin_task(self, task: TaskSpec, state: EnvState, rng: random.Random):
        pass

    def act(self, state: EnvState, rng: random.Random) -> int:
        table = np.asarray(state.table, dtype=np.int64)
        scores = np.zeros(len(table))
        if self.subset in ("both", "combinesWith"):
            scores += linkpred.relation_scores(
                self.model, table, linkpred.COMBINES_WITH, state.selected)
        if self.subset in ("both", "componentOf"):
            scores += linkpred.relation_scores(
                self.model, table, linkpred.COMPONENT_OF, state.goal)
        return int(np.argmax(scores))


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class EvalReport:
    policy: str
    partition: str
    depth: int
    num_distractors: int
    kg_mode: str
    num_tasks: int
    successes: int
    success_rate: float
    mean_steps: float
    seed: int
    records: list[dict]

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def evaluate(policy, book: RecipeBook, split: RecipeSplit, partition: str,
             depth: int, num_distractors: int, num_tasks: int, seed: int,
             max_steps: int | None = None, kg_mode: str | None = None,
             track_repeats: bool = False) -> EvalReport:
    """Roll the policy over num_tasks deterministic fresh tasks.

    Test-partition tasks are asserted to end on a held-out recipe before any
    rollout, keeping zero-shot claims honest. With track_repeats, each record
    notes whether the policy ever picked the same entity twice in a row (the
    self-combination pathology).
    """
    if num_tasks < 1:
        raise ContractError("num_tasks must be >= 1")
    budget = default_max_steps(depth) if max_steps is None else max_steps
    cfg = RewardConfig()
    recipe_index = {r: i for i, r in enumerate(book.recipes)}
    records = []
    successes = 0
    total_steps = 0
    for i in range(num_tasks):
        task = sample_task(book, split, partition, depth, num_distractors,
                           mix_seeds(seed, 0x3AA, i))
        if partition == "test":
            if recipe_index[task.intended_tree[-1]] not in split.test_recipes:
                raise ContractError("zero-shot isolation violated by sampler")
        rng = random.Random(mix_seeds(seed, 0xACE, i))
        state = reset(task)
        policy.begin_task(task, state, rng)
        episode_return = 0.0
        repeat_pick = False
        prev_pick: int | None = None
        while not state.done:
            slot = policy.act(state, rng)
            picked = state.table[slot]
            if prev_pick is not None and picked == prev_pick and state.selected != EMPTY:
                repeat_pick = True
            prev_pick = picked
            out = step(state, slot, book, cfg, budget)
            episode_return += out.reward
            state = out.state
        successes += state.success
        total_steps += state.steps_taken
        rec = {
            "task_index": i,
            "goal": book.name(task.goal),
            "success": bool(state.success),
            "steps": state.steps_taken,
            "return": episode_return,
        }
        if track_repeats:
            rec["repeat_pick"] = repeat_pick
        records.append(rec)

    return EvalReport(
        policy=getattr(policy, "name", type(policy).__name__),
        partition=partition,
        depth=depth,
        num_distractors=num_distractors,
        kg_mode=kg_mode or getattr(policy, "kg_mode", "none"),
        num_tasks=num_tasks,
        successes=successes,
        success_rate=successes / num_tasks,
        mean_steps=total_steps / num_tasks,
        seed=seed,
        records=records,
    )


CSV_FIELDS = ["policy", "partition", "depth", "num_distractors", "kg_mode",
              "num_tasks", "successes", "success_rate", "mean_steps", "seed"]


def append_report_csv(path: str, report: EvalReport) -> None:
    """One aggregate row per configuration, suitable for external plotting."""
    row = {k: getattr(report, k) for k in CSV_FIELDS}
    try:
        with open(path, "r", encoding="utf-8") as f:
            has_header = bool(f.readline().strip())
    except FileNotFoundError:
        has_header = False
    with open(path, "a", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        if not has_header:
            writer.writeheader()
        writer.writerow(row)
