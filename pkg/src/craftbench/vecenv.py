"""Batched auto-resetting environment runner and throughput benchmark."""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass

from .errors import ContractError
from .env import (
    EnvState, RewardConfig, StepOutcome, TaskSpec,
    default_max_steps, reset, sample_task,
)
from .recipes import RecipeBook, RecipeSplit
from .seeding import mix_seeds


class BatchRunner:
    """Steps num_envs environments in lockstep, resetting finished ones.

    Env i's k-th task seed is a pure function of (base_seed, i, k), so the
    whole outcome stream is reproducible and independent of batch size.
    Terminal outcomes are returned as-is; the replacement state is already
    reset, so callers never observe a done state in `states`.
    """

    def __init__(self, book: RecipeBook, split: RecipeSplit, partition: str,
                 depth: int, num_distractors: int, num_envs: int, base_seed: int,
                 reward_cfg: RewardConfig | None = None, max_steps: int | None = None):
        if num_envs < 1:
            raise ContractError("num_envs must be >= 1")
        self.book = book
        self.split = split
        self.partition = partition
        self.depth = depth
        self.num_distractors = num_distractors
        self.num_envs = num_envs
        self.base_seed = base_seed
        self.reward_cfg = reward_cfg or RewardConfig()
        self.max_steps = default_max_steps(depth) if max_steps is None else max_steps
        self.total_steps = 0
        self._episode_index = [0] * num_envs
        self.tasks: list[TaskSpec] = [self._next_task(i) for i in range(num_envs)]
        self.states: list[EnvState] = [reset(t) for t in self.tasks]

    def _next_task(self, i: int) -> TaskSpec:
        k = self._episode_index[i]
        self._episode_index[i] += 1
        seed = mix_seeds(self.base_seed, i, k)
        return sample_task(self.book, self.split, self.partition, self.depth,
                           self.num_distractors, seed)

    def batch_step(self, actions) -> list[StepOutcome]:
        if len(actions) != self.num_envs:
            raise ContractError(
                f"expected {self.num_envs} actions, got {len(actions)}")
        from .env import step as _step
        outcomes = []
        states = self.states
        book, cfg, max_steps = self.book, self.reward_cfg, self.max_steps
        for i in range(self.num_envs):
            try:
                out = _step(states[i], actions[i], book, cfg, max_steps)
            except ContractError as e:
                raise ContractError(f"env {i}: {e}") from e
            if out.state.done:
                task = self._next_task(i)
                self.tasks[i] = task
                states[i] = reset(task)
            else:
                states[i] = out.state
            outcomes.append(out)
        self.total_steps += self.num_envs
        return outcomes


@dataclass(frozen=True)
class ThroughputReport:
    steps: int
    seconds: float
    steps_per_second: float
    num_envs: int
    depth: int
    distractors: int

    def to_json(self) -> str:
        return json.dumps(self.__dict__)


def benchmark_throughput(runner: BatchRunner, policy: str = "random",
                         duration: float = 10.0, seed: int = 0) -> ThroughputReport:
    """Step the runner with the named policy for ~duration wall-clock seconds."""
    if policy != "random":
        raise ContractError(f"unknown benchmark policy {policy!r}")
    if duration < 1.0:
        raise ContractError("duration must be >= 1 s")
    uniform = random.Random(seed).random
    states = runner.states
    n = runner.num_envs
    steps = 0
    start = time.perf_counter()
    deadline = start + duration
    while True:
        actions = [int(uniform() * len(s.table)) for s in states]
        runner.batch_step(actions)
        steps += n
        now = time.perf_counter()
        if now >= deadline:
            break
    elapsed = now - start
    return ThroughputReport(
        steps=steps,
        seconds=elapsed,
        steps_per_second=steps / elapsed,
        num_envs=n,
        depth=runner.depth,
        distractors=runner.num_distractors,
    )
